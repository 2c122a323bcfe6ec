// Prints taper values along a line for two location-specific ranges, as CSV.
#include <iostream>

#include "adaptaper/tapers.hpp"

int main() {
  using namespace adaptaper;
  const double theta_s = 0.2, theta_t = 0.4;
  const std::vector<std::pair<std::string, TaperKind>> kinds{
      {"T1", Hyperspherical{1}}, {"T2", Hyperspherical{2}}, {"T3", Hyperspherical{3}},
      {"P1", Product{1}},        {"P2", Product{2}},        {"W", Wendland{}}};
  std::cout << "d";
  for (const auto& [name, kind] : kinds) std::cout << ',' << name;
  std::cout << '\n';
  for (int i = 0; i <= 40; ++i) {
    const double d = 0.01 * i;
    std::cout << d;
    for (const auto& [name, kind] : kinds) std::cout << ',' << evaluate_taper(kind, {0.0, 0.0}, {d, 0.0}, theta_s, theta_t);
    std::cout << '\n';
  }
}
