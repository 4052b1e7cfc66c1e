#include "pointhead/param_store.hpp"

#include <cmath>
#include <random>

namespace pointhead {

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL + salt * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

InitDesc InitDesc::constant(double c) {
    if (!std::isfinite(c)) {
        throw NumericError("non-finite constant initializer");
    }
    InitDesc d;
    d.kind = Kind::Constant;
    d.value = c;
    return d;
}

InitDesc InitDesc::uniform(double lo, double hi, std::uint64_t seed) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw ContractError("uniform initializer requires finite lo <= hi");
    }
    InitDesc d;
    d.kind = Kind::Uniform;
    d.lo = lo;
    d.hi = hi;
    d.seed = seed;
    return d;
}

InitDesc InitDesc::bias_table(std::vector<double> values) {
    InitDesc d;
    d.kind = Kind::BiasTable;
    d.table = std::move(values);
    return d;
}

namespace {

TensorValue materialize(const std::string& path, const std::vector<std::int64_t>& shape,
                        const InitDesc& init) {
    const std::int64_t n = shape_numel(shape);
    switch (init.kind) {
        case InitDesc::Kind::Zero:
            return TensorValue::zeros(shape);
        case InitDesc::Kind::Constant:
            return TensorValue::full(shape, init.value);
        case InitDesc::Kind::Uniform: {
            std::mt19937_64 rng(mix_seed(init.seed, fnv1a(path)));
            std::uniform_real_distribution<double> dist(init.lo, init.hi);
            std::vector<double> data(static_cast<std::size_t>(n));
            for (double& v : data) v = dist(rng);
            return TensorValue::of(shape, std::move(data));
        }
        case InitDesc::Kind::BiasTable: {
            if (static_cast<std::int64_t>(init.table.size()) != n) {
                throw ShapeError("bias table of length " + std::to_string(init.table.size()) +
                                 " does not fill parameter '" + path + "' of shape " +
                                 shape_to_string(shape));
            }
            return TensorValue::of(shape, init.table);
        }
    }
    throw ContractError("unknown initializer kind");
}

} // namespace

TensorValue& ParameterStore::define(const std::string& path, std::vector<std::int64_t> shape,
                                    InitDesc init) {
    if (entries_.count(path)) {
        throw ContractError("parameter path '" + path + "' already declared");
    }
    TensorValue value = materialize(path, shape, init);
    auto [it, ok] = entries_.emplace(path, Entry{std::move(value), std::move(init)});
    (void)ok;
    return it->second.value;
}

TensorValue& ParameterStore::at(const std::string& path) {
    auto it = entries_.find(path);
    if (it == entries_.end()) {
        throw ConfigError("unknown parameter path '" + path + "'");
    }
    return it->second.value;
}

const TensorValue& ParameterStore::at(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) {
        throw ConfigError("unknown parameter path '" + path + "'");
    }
    return it->second.value;
}

std::vector<std::string> ParameterStore::paths() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [path, entry] : entries_) {
        (void)entry;
        out.push_back(path);
    }
    return out;
}

std::int64_t ParameterStore::coordinate_count() const {
    std::int64_t n = 0;
    for (const auto& [path, entry] : entries_) {
        (void)path;
        n += entry.value.numel();
    }
    return n;
}

} // namespace pointhead
