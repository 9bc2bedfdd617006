#include "promptsr/tensor.hpp"

namespace promptsr {

namespace {
int g_threads = 1;
bool g_debug_checks =
#ifdef NDEBUG
    false;
#else
    true;
#endif
thread_local bool g_mac_on = false;
thread_local uint64_t g_mac = 0;
}  // namespace

int num_threads() { return g_threads; }
void set_num_threads(int n) { g_threads = n < 1 ? 1 : n; }

void MacCounter::enable(bool on) { g_mac_on = on; }
bool MacCounter::enabled() { return g_mac_on; }
void MacCounter::reset() { g_mac = 0; }
uint64_t MacCounter::value() { return g_mac; }
void MacCounter::add(uint64_t n) { g_mac += n; }

bool debug_checks_enabled() { return g_debug_checks; }
void set_debug_checks(bool on) { g_debug_checks = on; }

}  // namespace promptsr
