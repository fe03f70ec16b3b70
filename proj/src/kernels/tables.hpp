#pragma once

#include "interflow/kernels.hpp"

namespace interflow::kernels {

namespace scalar {
const KernelTable& table();
}

#ifdef INTERFLOW_HAVE_AVX2
namespace avx2 {
const KernelTable& table();
}
#endif

}  // namespace interflow::kernels
