#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccac/rng.hpp"
#include "ccac/version.hpp"

namespace ccac {

enum class Activation { kRelu, kTanh, kLinear };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::kRelu: return "relu";
        case Activation::kTanh: return "tanh";
        case Activation::kLinear: return "linear";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::kRelu;
    if (s == "tanh") return Activation::kTanh;
    if (s == "linear") return Activation::kLinear;
    throw std::invalid_argument("unknown activation name: " + s);
}

// Affine-tanh output squash mapping the last layer into the open interval
// (lo, hi). A tanh squash keeps the action bound differentiable end to end;
// a hard clamp would zero the gradient at the bound.
struct SquashRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct LayerSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int output_dim = 0;
    std::vector<Activation> activations;  // one per layer: hidden..., output
    std::optional<SquashRange> output_squash;

    void validate() const {
        if (input_dim < 1 || output_dim < 1)
            throw std::invalid_argument("LayerSpec: dims must be >= 1");
        for (int h : hidden_dims)
            if (h < 1) throw std::invalid_argument("LayerSpec: dims must be >= 1");
        if (activations.size() != hidden_dims.size() + 1)
            throw std::invalid_argument("LayerSpec: need one activation per layer");
        if (output_squash && !(output_squash->lo < output_squash->hi))
            throw std::invalid_argument("LayerSpec: squash range requires lo < hi");
    }

    std::vector<int> layer_dims() const {
        std::vector<int> d;
        d.reserve(hidden_dims.size() + 2);
        d.push_back(input_dim);
        for (int h : hidden_dims) d.push_back(h);
        d.push_back(output_dim);
        return d;
    }
};

// ReLU hidden stack with a configurable output head; the default shape used
// throughout the trainer.
inline LayerSpec make_mlp_spec(int input_dim, std::vector<int> hidden, int output_dim,
                               Activation output_act = Activation::kLinear,
                               std::optional<SquashRange> squash = std::nullopt) {
    LayerSpec spec;
    spec.input_dim = input_dim;
    spec.hidden_dims = std::move(hidden);
    spec.output_dim = output_dim;
    spec.activations.assign(spec.hidden_dims.size(), Activation::kRelu);
    spec.activations.push_back(output_act);
    spec.output_squash = squash;
    spec.validate();
    return spec;
}

using ParamVector = std::vector<double>;

struct GradResult {
    ParamVector d_params;
    std::vector<double> d_input;
};

struct FdCheckResult {
    double max_rel_error = 0.0;
    int excluded = 0;  // coordinates whose perturbation crosses a ReLU kink
};

// Scratch buffers for one forward/backward pass. Each worker thread owns one.
struct MlpWorkspace {
    std::vector<std::vector<double>> pre;    // pre-activations per layer
    std::vector<std::vector<double>> act;    // act[0] = input, act[l+1] = layer l output
    std::vector<std::vector<double>> delta;  // backward intermediates
};

// Fixed-shape fully connected network. Parameters live in a caller-owned flat
// ParamVector whose layout (per layer: row-major weights, then biases) is a
// pure function of the LayerSpec, so forward/backward are pure functions of
// (params, input).
class Mlp {
public:
    explicit Mlp(LayerSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        dims_ = spec_.layer_dims();
        const int layers = num_layers();
        weight_off_.resize(layers);
        bias_off_.resize(layers);
        int off = 0;
        for (int l = 0; l < layers; ++l) {
            weight_off_[l] = off;
            off += dims_[l + 1] * dims_[l];
            bias_off_[l] = off;
            off += dims_[l + 1];
        }
        param_count_ = off;
    }

    const LayerSpec& spec() const { return spec_; }
    int num_layers() const { return static_cast<int>(dims_.size()) - 1; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    int param_count() const { return param_count_; }

    // Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero,
    // drawn layer by layer in row-major order from the given seed.
    ParamVector init_params(std::uint64_t seed) const {
        ParamVector p(static_cast<size_t>(param_count_), 0.0);
        Rng rng(seed);
        for (int l = 0; l < num_layers(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
            double* w = p.data() + weight_off_[l];
            const int n = dims_[l + 1] * dims_[l];
            for (int i = 0; i < n; ++i) w[i] = rng.uniform(-bound, bound);
        }
        return p;
    }

    MlpWorkspace make_workspace() const {
        MlpWorkspace ws;
        const int layers = num_layers();
        ws.pre.resize(layers);
        ws.delta.resize(layers);
        ws.act.resize(layers + 1);
        ws.act[0].resize(dims_[0]);
        for (int l = 0; l < layers; ++l) {
            ws.pre[l].resize(dims_[l + 1]);
            ws.delta[l].resize(dims_[l + 1]);
            ws.act[l + 1].resize(dims_[l + 1]);
        }
        return ws;
    }

    void forward(const ParamVector& params, const double* input, double* output,
                 MlpWorkspace& ws) const {
        check_params(params);
        run_forward(params.data(), input, ws);
        const auto& out = ws.act.back();
        for (int i = 0; i < dims_.back(); ++i) output[i] = out[i];
    }

    std::vector<double> forward(const ParamVector& params,
                                const std::vector<double>& input,
                                MlpWorkspace& ws) const {
        if (static_cast<int>(input.size()) != input_dim())
            throw std::invalid_argument("Mlp::forward: input dimension mismatch");
        std::vector<double> out(static_cast<size_t>(output_dim()));
        forward(params, input.data(), out.data(), ws);
        return out;
    }

    // d_params = d(upstream . output)/d params, d_input likewise; exact
    // reverse-mode accumulation (ReLU subgradient at 0 taken as 0).
    void backward(const ParamVector& params, const double* input, const double* upstream,
                  GradResult& grad, MlpWorkspace& ws) const {
        check_params(params);
        run_forward(params.data(), input, ws);
        run_backward(params.data(), upstream, grad, ws);
    }

    GradResult backward(const ParamVector& params, const std::vector<double>& input,
                        const std::vector<double>& upstream, MlpWorkspace& ws) const {
        if (static_cast<int>(input.size()) != input_dim())
            throw std::invalid_argument("Mlp::backward: input dimension mismatch");
        if (static_cast<int>(upstream.size()) != output_dim())
            throw std::invalid_argument("Mlp::backward: upstream dimension mismatch");
        GradResult grad;
        backward(params, input.data(), upstream.data(), grad, ws);
        return grad;
    }

    // Worst-case relative disagreement between backward() and central finite
    // differences of upstream.output over every parameter and input
    // coordinate. Coordinates whose perturbation flips a ReLU activity
    // pattern are reported as excluded rather than scored.
    FdCheckResult fd_check(const ParamVector& params, const std::vector<double>& input,
                           double step,
                           const std::vector<double>* upstream_opt = nullptr) const {
        if (!(step > 0.0)) throw std::invalid_argument("fd_check: step must be > 0");
        std::vector<double> upstream =
            upstream_opt ? *upstream_opt
                         : std::vector<double>(static_cast<size_t>(output_dim()), 1.0);
        MlpWorkspace ws = make_workspace();
        GradResult analytic = backward(params, input, upstream, ws);

        FdCheckResult res;
        ParamVector p = params;
        std::vector<double> x = input;
        auto probe = [&](double* coord, double analytic_val) {
            const double saved = *coord;
            *coord = saved + step;
            const double fp = scalar_eval(p, x, upstream, ws);
            const auto mask_p = relu_mask(ws);
            *coord = saved - step;
            const double fm = scalar_eval(p, x, upstream, ws);
            const auto mask_m = relu_mask(ws);
            *coord = saved;
            if (mask_p != mask_m) {
                ++res.excluded;
                return;
            }
            const double fd = (fp - fm) / (2.0 * step);
            const double denom = std::max({std::fabs(fd), std::fabs(analytic_val), 1.0});
            res.max_rel_error = std::max(res.max_rel_error, std::fabs(fd - analytic_val) / denom);
        };
        for (size_t j = 0; j < p.size(); ++j) probe(&p[j], analytic.d_params[j]);
        for (size_t j = 0; j < x.size(); ++j) probe(&x[j], analytic.d_input[j]);
        return res;
    }

    int weight_offset(int layer) const { return weight_off_[layer]; }
    int bias_offset(int layer) const { return bias_off_[layer]; }

private:
    void check_params(const ParamVector& params) const {
        if (static_cast<int>(params.size()) != param_count_)
            throw std::invalid_argument("Mlp: parameter vector size mismatch");
    }

    static double apply_act(Activation a, double z) {
        switch (a) {
            case Activation::kRelu: return z > 0.0 ? z : 0.0;
            case Activation::kTanh: return std::tanh(z);
            case Activation::kLinear: return z;
        }
        return z;
    }

    // derivative expressed through the activation value where possible
    static double act_deriv(Activation a, double z, double h) {
        switch (a) {
            case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
            case Activation::kTanh: return 1.0 - h * h;
            case Activation::kLinear: return 1.0;
        }
        return 1.0;
    }

    void run_forward(const double* p, const double* input, MlpWorkspace& ws) const {
        const int layers = num_layers();
        std::copy(input, input + dims_[0], ws.act[0].begin());
        for (int l = 0; l < layers; ++l) {
            const int in = dims_[l], out = dims_[l + 1];
            const double* w = p + weight_off_[l];
            const double* b = p + bias_off_[l];
            const double* h = ws.act[l].data();
            double* z = ws.pre[l].data();
            double* a = ws.act[l + 1].data();
            const Activation activ = spec_.activations[l];
            for (int i = 0; i < out; ++i) {
                const double* wr = w + static_cast<size_t>(i) * in;
                double s = b[i];
                for (int j = 0; j < in; ++j) s += wr[j] * h[j];
                z[i] = s;
                a[i] = apply_act(activ, s);
            }
        }
        if (spec_.output_squash) {
            const auto [lo, hi] = *spec_.output_squash;
            auto& out = ws.act.back();
            for (double& v : out) {
                v = lo + 0.5 * (hi - lo) * (std::tanh(v) + 1.0);
                // keep the contract of an open interval even when tanh
                // saturates to exactly +-1 in floating point
                if (v >= hi) v = std::nextafter(hi, lo);
                if (v <= lo) v = std::nextafter(lo, hi);
            }
        }
    }

    void run_backward(const double* p, const double* upstream, GradResult& grad,
                      MlpWorkspace& ws) const {
        const int layers = num_layers();
        grad.d_params.resize(static_cast<size_t>(param_count_));
        grad.d_input.assign(static_cast<size_t>(dims_[0]), 0.0);

        {  // output layer delta, chaining squash and activation
            const int out = dims_.back();
            auto& d = ws.delta[layers - 1];
            const auto& z = ws.pre[layers - 1];
            const Activation activ = spec_.activations[layers - 1];
            for (int i = 0; i < out; ++i) {
                double g = upstream[i];
                if (spec_.output_squash) {
                    const auto [lo, hi] = *spec_.output_squash;
                    const double th = std::tanh(apply_act(activ, z[i]));
                    g *= 0.5 * (hi - lo) * (1.0 - th * th);
                }
                const double h = apply_act(activ, z[i]);
                d[i] = g * act_deriv(activ, z[i], h);
            }
        }
        for (int l = layers - 1; l >= 0; --l) {
            const int in = dims_[l], out = dims_[l + 1];
            const double* w = p + weight_off_[l];
            double* dw = grad.d_params.data() + weight_off_[l];
            double* db = grad.d_params.data() + bias_off_[l];
            const double* h = ws.act[l].data();
            const double* d = ws.delta[l].data();
            double* dprev = (l > 0) ? ws.delta[l - 1].data() : grad.d_input.data();
            if (l > 0) std::fill(ws.delta[l - 1].begin(), ws.delta[l - 1].end(), 0.0);
            for (int i = 0; i < out; ++i) {
                const double di = d[i];
                const double* wr = w + static_cast<size_t>(i) * in;
                double* dwr = dw + static_cast<size_t>(i) * in;
                db[i] = di;
                for (int j = 0; j < in; ++j) {
                    dwr[j] = di * h[j];
                    dprev[j] += di * wr[j];
                }
            }
            if (l > 0) {
                const int pin = dims_[l];
                const auto& z = ws.pre[l - 1];
                const auto& a = ws.act[l];
                const Activation activ = spec_.activations[l - 1];
                double* dd = ws.delta[l - 1].data();
                for (int j = 0; j < pin; ++j) dd[j] *= act_deriv(activ, z[j], a[j]);
            }
        }
    }

    double scalar_eval(const ParamVector& params, const std::vector<double>& input,
                       const std::vector<double>& upstream, MlpWorkspace& ws) const {
        run_forward(params.data(), input.data(), ws);
        double s = 0.0;
        const auto& out = ws.act.back();
        for (int i = 0; i < dims_.back(); ++i) s += upstream[i] * out[i];
        return s;
    }

    std::vector<char> relu_mask(const MlpWorkspace& ws) const {
        std::vector<char> mask;
        for (int l = 0; l < num_layers(); ++l) {
            if (spec_.activations[l] != Activation::kRelu) continue;
            for (double z : ws.pre[l]) mask.push_back(z > 0.0 ? 1 : 0);
        }
        return mask;
    }

    LayerSpec spec_;
    std::vector<int> dims_;
    std::vector<int> weight_off_;
    std::vector<int> bias_off_;
    int param_count_ = 0;
};

// --- parameter persistence -------------------------------------------------
// Text format: a header carrying the full LayerSpec plus a format version,
// followed by the flat values in decimal with round-trip precision. The
// loader rejects any header that does not match the expected spec.

inline void save_params(std::ostream& os, const LayerSpec& spec, const ParamVector& params) {
    os << "ccac-mlp v" << kParamFileVersion << "\n";
    os << "input " << spec.input_dim << "\n";
    os << "hidden";
    for (int h : spec.hidden_dims) os << ' ' << h;
    os << "\n";
    os << "output " << spec.output_dim << "\n";
    os << "activations";
    for (Activation a : spec.activations) os << ' ' << activation_name(a);
    os << "\n";
    if (spec.output_squash)
        os << "squash " << spec.output_squash->lo << ' ' << spec.output_squash->hi << "\n";
    else
        os << "squash none\n";
    os << "count " << params.size() << "\n";
    char buf[40];
    for (double v : params) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << buf << "\n";
    }
}

inline void save_params(const std::string& path, const LayerSpec& spec,
                        const ParamVector& params) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open parameter file for writing: " + path);
    save_params(os, spec, params);
    if (!os) throw std::runtime_error("failed writing parameter file: " + path);
}

inline ParamVector load_params(std::istream& is, const LayerSpec& expected) {
    auto fail = [](const std::string& why) -> ParamVector {
        throw std::runtime_error("parameter file rejected: " + why);
    };
    std::string magic, version;
    if (!(is >> magic >> version) || magic != "ccac-mlp") return fail("bad magic");
    if (version != "v" + std::to_string(kParamFileVersion))
        return fail("unsupported format version " + version);

    std::string key;
    int input = 0;
    if (!(is >> key >> input) || key != "input") return fail("missing input dim");
    if (input != expected.input_dim) return fail("input dim mismatch");

    if (!(is >> key) || key != "hidden") return fail("missing hidden dims");
    std::string line;
    std::getline(is, line);
    std::istringstream hs(line);
    std::vector<int> hidden;
    for (int h; hs >> h;) hidden.push_back(h);
    if (hidden != expected.hidden_dims) return fail("hidden dims mismatch");

    int output = 0;
    if (!(is >> key >> output) || key != "output") return fail("missing output dim");
    if (output != expected.output_dim) return fail("output dim mismatch");

    if (!(is >> key) || key != "activations") return fail("missing activations");
    std::getline(is, line);
    std::istringstream as(line);
    std::vector<Activation> acts;
    for (std::string a; as >> a;) acts.push_back(activation_from_name(a));
    if (acts != expected.activations) return fail("activation mismatch");

    if (!(is >> key) || key != "squash") return fail("missing squash");
    std::getline(is, line);
    std::istringstream ss(line);
    std::string first;
    ss >> first;
    if (first == "none") {
        if (expected.output_squash) return fail("squash mismatch");
    } else {
        double lo = std::stod(first), hi = 0.0;
        if (!(ss >> hi)) return fail("bad squash range");
        if (!expected.output_squash || expected.output_squash->lo != lo ||
            expected.output_squash->hi != hi)
            return fail("squash mismatch");
    }

    size_t count = 0;
    if (!(is >> key >> count) || key != "count") return fail("missing count");
    Mlp net(expected);
    if (count != static_cast<size_t>(net.param_count())) return fail("parameter count mismatch");

    ParamVector params(count);
    for (size_t i = 0; i < count; ++i)
        if (!(is >> params[i])) return fail("truncated value list");
    return params;
}

inline ParamVector load_params(const std::string& path, const LayerSpec& expected) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open parameter file: " + path);
    return load_params(is, expected);
}

}  // namespace ccac
