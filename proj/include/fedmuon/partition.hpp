#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedmuon/rng.hpp"

namespace fedmuon {

/// Label-skew split: for every class, client shares are drawn from
/// Dirichlet(concentration) and that class's samples are dealt out
/// accordingly. Clients left empty take one sample from the currently largest
/// client. The result is disjoint, covering, and each list is sorted.
///
/// Throws std::invalid_argument if concentration <= 0, n_clients == 0, or
/// there are fewer samples than clients.
std::vector<std::vector<std::size_t>> dirichlet_partition(std::span<const int> labels,
                                                          std::size_t n_clients,
                                                          double concentration, Rng& rng);

/// Shannon entropy (nats) of the label histogram of one client.
double label_entropy(std::span<const int> labels, std::span<const std::size_t> indices,
                     std::size_t classes);

}  // namespace fedmuon
