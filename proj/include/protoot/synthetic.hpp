#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "protoot/matrix.hpp"

namespace protoot {

// Two-domain synthetic data: unit class means on the sphere with a minimum
// pairwise angle, per-class sample counts following a Zipf profile (or an
// explicit count list), and a second domain produced by a fixed near-identity
// rotation plus per-class offsets.
struct SyntheticSpec {
    std::size_t classes = 5;
    std::size_t dim = 32;
    std::size_t samples = 310;               // per domain
    double zipf_exponent = 1.0;              // 0 = balanced classes
    std::vector<std::size_t> class_counts;   // overrides samples/zipf when nonempty
    double noise_sigma = 0.09;               // per-coordinate sample noise
    double rotation_strength = 0.4;          // 0 = identity rotation
    double offset_scale = 0.35;              // norm scale of per-class offsets
    double min_angle_deg = 40.0;             // rejection threshold between class means
    std::uint64_t seed = 7;
};

struct DomainData {
    UnitRowMatrix features;        // N x dim, unit rows
    std::vector<int> labels;       // evaluation only, never visible to training
    UnitRowMatrix class_means;     // classes x dim, unit rows
};

struct SyntheticPair {
    DomainData a;
    DomainData b;
};

// Per-class counts proportional to 1/rank^exponent, rounded with the largest
// remainder method; every class keeps at least one sample.
std::vector<std::size_t> zipf_counts(std::size_t total, std::size_t classes, double exponent);

SyntheticPair generate_synthetic_domains(const SyntheticSpec& spec);

}  // namespace protoot
