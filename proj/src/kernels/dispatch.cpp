#include <cstdlib>
#include <cstring>

#include "conforest/common.hpp"
#include "conforest/kernels.hpp"

namespace conforest::kernels {

namespace {
const Ops* select() {
  const char* env = std::getenv("CONFOREST_KERNELS");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return &scalar_ops();
    if (std::strcmp(env, "avx2") == 0) {
      const Ops* t = avx2_ops();
      if (t == nullptr)
        throw ConfigError("CONFOREST_KERNELS=avx2 but this CPU has no AVX2");
      return t;
    }
    if (std::strcmp(env, "auto") != 0)
      throw ConfigError("CONFOREST_KERNELS must be scalar, avx2 or auto");
  }
  const Ops* t = avx2_ops();
  return t != nullptr ? t : &scalar_ops();
}
}  // namespace

const Ops& ops() {
  static const Ops* active = select();
  return *active;
}

}  // namespace conforest::kernels
