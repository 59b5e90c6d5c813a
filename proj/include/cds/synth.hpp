#pragma once

// Deterministic synthetic image dataset in the exact CIFAR-10 binary
// container, for running the full pipeline where the official files are not
// available. Each class is defined by a stripe pattern (orientation +
// frequency) and a palette; instances vary in phase, amplitude, color and
// noise, so the class signal survives crops/flips while single images stay
// noisy enough to overfit on.

#include <cstdint>
#include <string>

#include "cds/data.hpp"

namespace cds::synth {

data::ImageDataset make_synthetic_cifar(int count, std::uint64_t seed,
                                        const std::string& split);

// Writes data_batch_1..5.bin and test_batch.bin under dir.
void write_synthetic_cifar_dir(const std::string& dir, int train_count, int test_count,
                               std::uint64_t seed);

}  // namespace cds::synth
