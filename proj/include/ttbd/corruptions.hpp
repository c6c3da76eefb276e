#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttbd/model.hpp"
#include "ttbd/tensor.hpp"

namespace ttbd {

enum class CorruptionKind {
    GaussianNoise = 0,
    GaussianBlur = 1,
    Brightness = 2,
    Contrast = 3,
    Pixelate = 4,
    SaltPepper = 5,
};

constexpr int kMinSeverity = 1;
constexpr int kMaxSeverity = 5;
/// Sentinel recorded when the prediction never flips through severity 5.
constexpr int kNeverFlips = kMaxSeverity + 1;

const char* corruption_name(CorruptionKind k);
std::vector<CorruptionKind> all_corruptions();

/// Applies the corruption at the given severity (1..5, harsher upward).
/// Output stays in [0,1]; deterministic given the seed.
Tensor corrupt(const Tensor& image, CorruptionKind kind, int severity, std::uint64_t seed);

/// Smallest severity at which the prediction differs from the clean
/// prediction; kNeverFlips if it never does. `sample` is [C,H,W] or [1,C,H,W].
int recorded_severity(const Model& model, const Tensor& sample, CorruptionKind kind,
                      std::uint64_t seed);
int recorded_severity(const Model& model, const Tensor& sample, CorruptionKind kind,
                      std::uint64_t seed, int clean_prediction);

/// Population standard deviation of the recorded-severity vector over the
/// given kinds. Low deviation = corruption-consistent = suspicious.
double crc_score(const Model& model, const Tensor& sample, const std::vector<CorruptionKind>& kinds,
                 std::uint64_t seed);

double severity_deviation(const std::vector<int>& severities);

/// The severity parameter table as versioned plain text, for run audit.
std::string severity_table_text();

}  // namespace ttbd
