#include "saaf/optim.hpp"

#include "saaf/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace saaf {

Tensor& ParamRegistry::add(const std::string& name, Tensor value, bool trainable) {
    if (params_.contains(name)) {
        throw std::logic_error("duplicate parameter name: " + name);
    }
    value.set_requires_grad(trainable);
    auto [it, inserted] = params_.emplace(name, Param{std::move(value), trainable});
    return it->second.value;
}

const Param& ParamRegistry::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw Error(ErrorKind::TargetNotFound, "no parameter named " + name);
    }
    return it->second;
}

Param& ParamRegistry::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) {
        throw Error(ErrorKind::TargetNotFound, "no parameter named " + name);
    }
    return it->second;
}

void ParamRegistry::erase(const std::string& name) {
    if (params_.erase(name) == 0) {
        throw Error(ErrorKind::TargetNotFound, "no parameter named " + name);
    }
}

void ParamRegistry::set_trainable(const std::string& name, bool trainable) {
    Param& p = at(name);
    p.trainable = trainable;
    p.value.set_requires_grad(trainable);
    if (!trainable) {
        p.value.clear_grad();
    }
}

void ParamRegistry::zero_grad() {
    for (auto& [name, p] : params_) {
        if (p.trainable) {
            p.value.zero_grad();
        }
    }
}

void ParamRegistry::clear_grad() {
    for (auto& [name, p] : params_) {
        p.value.clear_grad();
    }
}

std::vector<std::string> ParamRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, p] : params_) {
        out.push_back(name);
    }
    return out;
}

std::vector<std::string> ParamRegistry::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [name, p] : params_) {
        if (p.trainable) {
            out.push_back(name);
        }
    }
    return out;
}

AdamState::AdamState(AdamOptions opts) : options(opts) {
    if (!(options.lr > 0.0) || options.beta1 < 0.0 || options.beta1 >= 1.0 || options.beta2 < 0.0 ||
        options.beta2 >= 1.0 || !(options.eps > 0.0)) {
        throw std::invalid_argument("invalid Adam hyperparameters");
    }
}

void adam_step(ParamRegistry& registry, AdamState& state) {
    for (const auto& [name, p] : registry) {
        if (p.trainable && !p.value.has_grad()) {
            throw Error(ErrorKind::MissingGradient, "trainable parameter " + name + " has no gradient");
        }
    }
    const AdamOptions& o = state.options;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(o.beta1, t);
    const double correction2 = 1.0 - std::pow(o.beta2, t);
    for (const auto& name : registry.trainable_names()) {
        Tensor& value = registry.at(name).value;
        const Vector& g = value.grad();
        auto [m_it, m_new] = state.first_moment.try_emplace(name, Vector::Zero(value.numel()));
        auto [v_it, v_new] = state.second_moment.try_emplace(name, Vector::Zero(value.numel()));
        Vector& m = m_it->second;
        Vector& v = v_it->second;
        if (m.size() != value.numel() || v.size() != value.numel()) {
            throw Error(ErrorKind::ShapeMismatch, "optimizer state shape differs for " + name);
        }
        m = o.beta1 * m + (1.0 - o.beta1) * g;
        v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseProduct(g);
        const auto m_hat = (m / correction1).array();
        const auto v_hat = (v / correction2).array();
        value.mutable_data().array() -= o.lr * m_hat / (v_hat.sqrt() + o.eps);
        value.clear_grad();
    }
}

double CheckReport::worst() const {
    double w = 0.0;
    for (const auto& p : params) {
        w = std::max(w, p.max_rel_error);
    }
    return w;
}

namespace {

double checked_loss(const std::function<Tensor()>& loss_fn) {
    NoGradGuard no_grad;
    const double value = loss_fn().item();
    if (!std::isfinite(value)) {
        throw Error(ErrorKind::NonFiniteLoss, "loss function returned a non-finite value");
    }
    return value;
}

} // namespace

CheckReport finite_diff_check(const std::function<Tensor()>& loss_fn, ParamRegistry& registry,
                              const CheckOptions& options) {
    if (!(options.h > 0.0)) {
        throw std::invalid_argument("finite-difference step must be positive");
    }
    registry.zero_grad();
    {
        Tensor loss = loss_fn();
        if (!std::isfinite(loss.item())) {
            throw Error(ErrorKind::NonFiniteLoss, "loss function returned a non-finite value");
        }
        loss.backward();
    }

    std::mt19937_64 rng(options.seed);
    CheckReport report;
    report.tol = options.tol;
    for (const auto& name : registry.trainable_names()) {
        Tensor& value = registry.at(name).value;
        const Vector analytic = value.grad();
        const Index n = value.numel();
        const Index k = std::min(options.max_coordinates, n);

        // Partial Fisher-Yates: first k entries are a uniform sample.
        std::vector<Index> coords(static_cast<size_t>(n));
        for (Index i = 0; i < n; ++i) {
            coords[i] = i;
        }
        for (Index i = 0; i < k; ++i) {
            std::uniform_int_distribution<Index> pick(i, n - 1);
            std::swap(coords[i], coords[pick(rng)]);
        }

        ParamCheck check{name, k, 0.0};
        for (Index j = 0; j < k; ++j) {
            const Index c = coords[j];
            const double original = value.data()[c];
            value.mutable_data()[c] = original + options.h;
            const double up = checked_loss(loss_fn);
            value.mutable_data()[c] = original - options.h;
            const double down = checked_loss(loss_fn);
            value.mutable_data()[c] = original;
            const double numeric = (up - down) / (2.0 * options.h);
            const double a = analytic[c];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            check.max_rel_error = std::max(check.max_rel_error, std::abs(a - numeric) / denom);
        }
        report.params.push_back(check);
    }
    registry.clear_grad();
    report.passed = report.worst() < options.tol;
    return report;
}

} // namespace saaf
