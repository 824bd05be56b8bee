#include "refvos/runtime.hpp"

#include <atomic>

namespace refvos {

namespace {
std::atomic<Precision> g_precision{Precision::f64};
}

Precision precision() { return g_precision.load(std::memory_order_relaxed); }

void set_precision(Precision p) { g_precision.store(p, std::memory_order_relaxed); }

}  // namespace refvos
