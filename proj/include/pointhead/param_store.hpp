#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pointhead/tensor.hpp"

namespace pointhead {

// Deterministic 64-bit hash (FNV-1a); std::hash is not stable across builds.
std::uint64_t fnv1a(const std::string& text);
// splitmix64 step, used to derive per-path RNG streams from one run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

/// How a parameter gets its initial value. Initialization is a pure function
/// of (descriptor, parameter path), so stores built from the same seed are
/// bit-identical.
struct InitDesc {
    enum class Kind { Zero, Constant, Uniform, BiasTable };

    Kind kind = Kind::Zero;
    double value = 0.0;             // Constant
    double lo = 0.0, hi = 0.0;      // Uniform bounds
    std::uint64_t seed = 0;         // Uniform stream seed (mixed with path)
    std::vector<double> table;      // BiasTable payload, frozen at declare time

    static InitDesc zero() { return {}; }
    static InitDesc constant(double c);
    static InitDesc uniform(double lo, double hi, std::uint64_t seed);
    static InitDesc bias_table(std::vector<double> values);
};

/// Named map from dot-separated parameter path to value plus its
/// initialization descriptor. Paths are unique; iteration order is the sorted
/// path order, which keeps every consumer deterministic.
class ParameterStore {
  public:
    struct Entry {
        TensorValue value;
        InitDesc init;
    };

    // Declares a parameter and materializes its initial value.
    // Redeclaring an existing path is a contract error.
    TensorValue& define(const std::string& path, std::vector<std::int64_t> shape, InitDesc init);

    bool contains(const std::string& path) const { return entries_.count(path) != 0; }
    TensorValue& at(const std::string& path);
    const TensorValue& at(const std::string& path) const;

    std::size_t size() const { return entries_.size(); }
    std::vector<std::string> paths() const;

    // Total scalar coordinate count across all parameters.
    std::int64_t coordinate_count() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

  private:
    std::map<std::string, Entry> entries_;
};

} // namespace pointhead
