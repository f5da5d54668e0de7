#pragma once

#include <cstdint>
#include <string>

#include "cimsim/net.hpp"
#include "cimsim/types.hpp"

namespace cimsim {

// Deterministic synthetic classification task plus a small trained MLP:
// equidistant Gaussian blobs in dim dimensions (class centers are scaled
// orthogonal sign patterns, so every pair sits at the same distance) and a
// dim -> hidden -> classes ReLU network fit by full-batch gradient descent.
// center_radius sets the difficulty; the defaults land the float model a
// little under ceiling so noise sweeps have visible room to degrade.
struct FixtureSpec {
    int dim = 16;
    int classes = 4;
    int hidden = 32;
    int train_n = 2000;
    int eval_n = 2000;
    double center_radius = 3.2;
    int epochs = 600;
    double lr = 1.0;
    std::uint64_t seed = 42;
};

struct Dataset {
    MatD x;  // one sample per row
    VecI y;
};

Dataset make_blobs(const FixtureSpec& spec, int count, std::uint64_t stream);

// Trains the MLP and returns it fully calibrated (percentile activations,
// max weights).
Model train_fixture(const FixtureSpec& spec, const Dataset& train);

// Writes model.json + weight blobs + train/eval splits into dir.
void gen_fixture(const std::string& dir, const FixtureSpec& spec = {});

// split is "train" or "eval".
Dataset load_dataset(const std::string& dir, const std::string& split);
void save_dataset(const Dataset& data, const std::string& dir, const std::string& split);

}  // namespace cimsim
