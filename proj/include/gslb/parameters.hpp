#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gslb/autodiff.hpp"
#include "gslb/rng.hpp"

namespace gslb::ad {

enum class Init {
    uniform_fan_in,  // U(±1/√fan_in), fan_in = rows of a [in, out] weight
    zeros,
    ones,
    normal_embedding  // N(0, 0.02)
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Named trainable tensors. Registering the same tensor under two roles is
/// done by holding two handles to one entry, never by adding it twice.
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        Init init;
    };

    Tensor add(std::string name, Shape shape, Init init);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t value_count() const;

    void initialize(Rng& rng);
    void zero_grad();

    /// Bit-exact serialization: "GSLB", version, float width, then per tensor
    /// (name length, name, rank, dims, row-major values), little-endian.
    std::string serialize(Precision width) const;
    /// Overwrites values of matching tensors; names and shapes must agree.
    void deserialize(const std::string& bytes);

    void save(const std::filesystem::path& path, Precision width) const;
    void load(const std::filesystem::path& path);

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct GradCheckEntry {
    std::string name;
    double max_abs_error = 0.0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Compares analytic gradients of loss_fn against central differences.
/// Relative error of a tensor is max|analytic − numeric| divided by the
/// tensor's largest gradient magnitude (floored at 1e-8). Requires 64-bit mode.
GradCheckReport finite_difference_check(const std::vector<std::pair<std::string, Tensor>>& params,
                                        const std::function<Tensor()>& loss_fn,
                                        double tolerance, double eps = 1e-3);

GradCheckReport finite_difference_check(const ParameterSet& params,
                                        const std::function<Tensor()>& loss_fn,
                                        double tolerance, double eps = 1e-3);

}  // namespace gslb::ad
