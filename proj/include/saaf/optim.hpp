#pragma once

#include "saaf/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace saaf {

struct Param {
    Tensor value;
    bool trainable = false;
};

/// Named parameters, iterated in lexicographic name order. Trainable tensors
/// carry requires_grad; frozen ones never do and are never updated.
class ParamRegistry {
  public:
    using Map = std::map<std::string, Param>;

    Tensor& add(const std::string& name, Tensor value, bool trainable);
    bool contains(const std::string& name) const { return params_.contains(name); }
    const Param& at(const std::string& name) const;
    Param& at(const std::string& name);
    const Tensor& tensor(const std::string& name) const { return at(name).value; }
    void erase(const std::string& name);
    void set_trainable(const std::string& name, bool trainable);

    /// Allocates zeroed gradient buffers for every trainable parameter.
    void zero_grad();
    void clear_grad();

    std::vector<std::string> names() const;
    std::vector<std::string> trainable_names() const;
    size_t size() const { return params_.size(); }

    Map::const_iterator begin() const { return params_.begin(); }
    Map::const_iterator end() const { return params_.end(); }

  private:
    Map params_;
};

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    explicit AdamState(AdamOptions options = {});

    AdamOptions options;
    std::uint64_t step = 0;
    std::map<std::string, Vector> first_moment;
    std::map<std::string, Vector> second_moment;
};

/// Bias-corrected Adam update on the trainable parameters, then clears their
/// gradients. Every trainable parameter must hold a gradient.
void adam_step(ParamRegistry& registry, AdamState& state);

struct ParamCheck {
    std::string name;
    Index coordinates = 0;
    double max_rel_error = 0.0;
};

struct CheckReport {
    std::vector<ParamCheck> params;
    double tol = 0.0;
    bool passed = false;

    double worst() const;
};

struct CheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    Index max_coordinates = 32;
    std::uint64_t seed = 0;
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is ~0 are compared absolutely at this scale.
    double abs_floor = 1e-6;
};

/// Compares backward() gradients of `loss_fn` against central differences
/// (L(p + h) - L(p - h)) / 2h on up to `max_coordinates` seeded coordinates
/// of every trainable parameter. `loss_fn` must be deterministic and read the
/// registry's tensors on every call.
CheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, ParamRegistry& registry,
                              const CheckOptions& options = {});

} // namespace saaf
