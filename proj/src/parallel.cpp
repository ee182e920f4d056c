#include "nullwave/parallel.hpp"

namespace nullwave {

int& thread_count() {
  static int n = 0;
  return n;
}

int effective_threads() {
  const int n = thread_count();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace nullwave
