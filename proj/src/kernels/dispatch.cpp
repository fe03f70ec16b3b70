#include <atomic>
#include <cstdlib>
#include <string>

#include "interflow/errors.hpp"
#include "tables.hpp"

namespace interflow::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(INTERFLOW_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  const char* env = std::getenv("INTERFLOW_ISA");
  if (env != nullptr) {
    const std::string want(env);
    if (want == "scalar") return &scalar::table();
    if (want == "avx2" && available(Isa::Avx2)) return &table(Isa::Avx2);
  }
  return available(Isa::Avx2) ? &table(Isa::Avx2) : &scalar::table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{initial_table()};
  return ptr;
}

}  // namespace

bool available(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2: {
      static const bool ok = cpu_has_avx2();
      return ok;
    }
  }
  return false;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::Scalar};
  if (available(Isa::Avx2)) out.push_back(Isa::Avx2);
  return out;
}

const KernelTable& table(Isa isa) {
  if (!available(isa)) {
    throw StateError("kernel variant '" + std::string(name(isa)) + "' is not available on this host");
  }
#ifdef INTERFLOW_HAVE_AVX2
  if (isa == Isa::Avx2) return avx2::table();
#endif
  return scalar::table();
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_release); }

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "unknown";
}

}  // namespace interflow::kernels
