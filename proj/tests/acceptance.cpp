// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: acceptance [--only N]...

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <vector>

#include "rydberg/acceptance.hpp"

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--only N]...\n";
      return 1;
    }
  }
  int failures = 0;
  int ran = 0;
  for (const auto& c : rydberg::acceptance::criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto r = rydberg::acceptance::run_criterion(c);
    rydberg::acceptance::print(std::cout, r);
    std::cout.flush();
    ++ran;
    if (!r.pass) ++failures;
  }
  if (ran == 0) {
    std::cerr << "no criterion selected\n";
    return 1;
  }
  std::cout << (ran - failures) << "/" << ran << " criteria passed\n";
  return failures == 0 ? 0 : 2;
}
