#include "fedmuon/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace fedmuon {

std::vector<std::vector<std::size_t>> dirichlet_partition(std::span<const int> labels,
                                                          std::size_t n_clients,
                                                          double concentration, Rng& rng) {
  if (!(concentration > 0.0)) throw std::invalid_argument("dirichlet_partition: concentration must be > 0");
  if (n_clients == 0) throw std::invalid_argument("dirichlet_partition: n_clients must be >= 1");
  if (labels.size() < n_clients) {
    throw std::invalid_argument("dirichlet_partition: " + std::to_string(labels.size()) +
                                " samples cannot cover " + std::to_string(n_clients) + " clients");
  }

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::vector<std::vector<std::size_t>> parts(n_clients);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> share(n_clients);
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double total = 0.0;
    for (double& s : share) {
      s = gamma(rng);
      total += s;
    }
    if (!(total > 0.0)) {
      // Every draw underflowed (tiny concentration): the whole class goes to one client.
      std::fill(share.begin(), share.end(), 0.0);
      share[std::uniform_int_distribution<std::size_t>(0, n_clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const auto n = static_cast<double>(idx.size());
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < n_clients; ++c) {
      cumulative += share[c] / total;
      std::size_t end = c + 1 == n_clients ? idx.size()
                                           : std::min(idx.size(), static_cast<std::size_t>(std::floor(cumulative * n)));
      end = std::max(end, begin);
      parts[c].insert(parts[c].end(), idx.begin() + static_cast<long>(begin),
                      idx.begin() + static_cast<long>(end));
      begin = end;
    }
  }

  for (auto& part : parts) {
    if (!part.empty()) continue;
    auto largest = std::max_element(parts.begin(), parts.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    part.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& part : parts) std::sort(part.begin(), part.end());
  return parts;
}

double label_entropy(std::span<const int> labels, std::span<const std::size_t> indices,
                     std::size_t classes) {
  if (indices.empty()) return 0.0;
  std::vector<double> counts(classes, 0.0);
  for (std::size_t i : indices) counts.at(static_cast<std::size_t>(labels[i])) += 1.0;
  const auto n = static_cast<double>(indices.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

}  // namespace fedmuon
