#include "hmip/mlp.hpp"

#include <cmath>
#include <random>

#include "hmip/error.hpp"

namespace hmip {

namespace {

// Global counter so that a cache can never match a different parameter state,
// even across copies of the same network.
std::uint64_t next_version() {
    static std::uint64_t counter = 1;
    return ++counter;
}

double sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

void Mlp::Gradients::add(const Gradients& other, double scale) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += scale * other.weights[l];
        biases[l] += scale * other.biases[l];
    }
}

void Mlp::Gradients::scale(double factor) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] *= factor;
        biases[l] *= factor;
    }
}

Eigen::VectorXd Mlp::Gradients::flatten() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    Eigen::VectorXd out(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < weights[l].cols(); ++c) out[k++] = weights[l](r, c);
        }
        for (Eigen::Index r = 0; r < biases[l].size(); ++r) out[k++] = biases[l][r];
    }
    return out;
}

Mlp::Mlp(std::vector<int> layer_dims, OutputActivation output, std::uint64_t seed)
    : Mlp(zeros(std::move(layer_dims), output)) {
    std::mt19937_64 rng(seed);
    for (auto& w : weights_) {
        std::normal_distribution<double> init(0.0, std::sqrt(2.0 / static_cast<double>(w.cols())));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = init(rng);
        }
    }
    version_ = next_version();
}

Mlp Mlp::zeros(std::vector<int> layer_dims, OutputActivation output) {
    Mlp m;
    m.dims_ = std::move(layer_dims);
    m.output_ = output;
    m.check_dims();
    for (std::size_t l = 0; l + 1 < m.dims_.size(); ++l) {
        m.weights_.push_back(Eigen::MatrixXd::Zero(m.dims_[l + 1], m.dims_[l]));
        m.biases_.push_back(Eigen::VectorXd::Zero(m.dims_[l + 1]));
    }
    m.version_ = next_version();
    return m;
}

void Mlp::check_dims() const {
    if (dims_.size() < 2) throw Error(ErrorCode::kInvalidArgument, "an MLP needs at least input and output sizes");
    for (int d : dims_) {
        if (d <= 0) throw Error(ErrorCode::kInvalidArgument, "layer sizes must be positive");
    }
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
}

void Mlp::set_layer(int layer, Eigen::MatrixXd w, Eigen::VectorXd b) {
    if (w.rows() != weights_[layer].rows() || w.cols() != weights_[layer].cols() || b.size() != biases_[layer].size()) {
        throw Error(ErrorCode::kDimensionMismatch, "layer shape mismatch");
    }
    weights_[layer] = std::move(w);
    biases_[layer] = std::move(b);
    version_ = next_version();
}

Eigen::VectorXd Mlp::forward(std::span<const double> input) const {
    Cache cache;
    return forward(input, cache);
}

Eigen::VectorXd Mlp::forward(std::span<const double> input, Cache& cache) const {
    if (static_cast<int>(input.size()) != input_dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "input has dimension " + std::to_string(input.size()) +
                                                       ", network expects " + std::to_string(input_dim()));
    }
    cache.version = version_;
    cache.inputs.clear();
    cache.pre.clear();
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(input.data(), static_cast<Eigen::Index>(input.size()));
    for (int l = 0; l < num_layers(); ++l) {
        cache.inputs.push_back(a);
        Eigen::VectorXd z = weights_[l] * a + biases_[l];
        cache.pre.push_back(z);
        if (l + 1 < num_layers()) {
            a = z.cwiseMax(0.0);
        } else if (output_ == OutputActivation::kSigmoid) {
            a = z.unaryExpr([](double v) { return sigmoid(v); });
        } else {
            a = z;
        }
    }
    cache.output = a;
    return a;
}

Mlp::Gradients Mlp::zero_gradients() const {
    Gradients g;
    for (int l = 0; l < num_layers(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(biases_[l].size()));
    }
    return g;
}

Mlp::Gradients Mlp::backward(const Cache& cache, std::span<const double> upstream) const {
    if (cache.version != version_ || static_cast<int>(cache.pre.size()) != num_layers()) {
        throw Error(ErrorCode::kStaleActivationCache, "activations do not belong to the current parameters");
    }
    if (static_cast<int>(upstream.size()) != output_dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "upstream gradient has the wrong dimension");
    }
    Gradients g = zero_gradients();
    Eigen::VectorXd delta = Eigen::Map<const Eigen::VectorXd>(upstream.data(), output_dim());
    if (output_ == OutputActivation::kSigmoid) {
        delta = delta.cwiseProduct(cache.output.unaryExpr([](double s) { return s * (1.0 - s); }));
    }
    for (int l = num_layers() - 1; l >= 0; --l) {
        g.weights[l] = delta * cache.inputs[l].transpose();
        g.biases[l] = delta;
        if (l == 0) break;
        delta = weights_[l].transpose() * delta;
        // ReLU subgradient at zero is taken as 0.
        const Eigen::VectorXd& z = cache.pre[l - 1];
        for (Eigen::Index i = 0; i < delta.size(); ++i) {
            if (!(z[i] > 0.0)) delta[i] = 0.0;
        }
    }
    return g;
}

Eigen::VectorXd Mlp::parameters() const {
    Gradients view{weights_, biases_};
    return view.flatten();
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
        throw Error(ErrorCode::kDimensionMismatch, "parameter vector has the wrong length");
    }
    Eigen::Index k = 0;
    for (int l = 0; l < num_layers(); ++l) {
        auto& w = weights_[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[k++];
        }
        for (Eigen::Index r = 0; r < biases_[l].size(); ++r) biases_[l][r] = flat[k++];
    }
    version_ = next_version();
}

void Mlp::apply(const Gradients& direction, double step) {
    for (int l = 0; l < num_layers(); ++l) {
        weights_[l] -= step * direction.weights[l];
        biases_[l] -= step * direction.biases[l];
    }
    version_ = next_version();
}

nlohmann::json Mlp::to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (int l = 0; l < num_layers(); ++l) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(weights_[l].size()));
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r) {
            for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) w.push_back(weights_[l](r, c));
        }
        std::vector<double> b(biases_[l].data(), biases_[l].data() + biases_[l].size());
        layers.push_back({{"weights", w}, {"biases", b}});
    }
    return {{"layer_dims", dims_},
            {"hidden_activation", "relu"},
            {"output_activation", output_ == OutputActivation::kSigmoid ? "sigmoid" : "identity"},
            {"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& doc) {
    try {
        const std::string act = doc.at("output_activation").get<std::string>();
        if (act != "sigmoid" && act != "identity") throw Error(ErrorCode::kParse, "unknown output activation " + act);
        Mlp m = zeros(doc.at("layer_dims").get<std::vector<int>>(),
                      act == "sigmoid" ? OutputActivation::kSigmoid : OutputActivation::kIdentity);
        const auto& layers = doc.at("layers");
        if (static_cast<int>(layers.size()) != m.num_layers()) throw Error(ErrorCode::kParse, "layer count mismatch");
        for (int l = 0; l < m.num_layers(); ++l) {
            const auto w = layers[l].at("weights").get<std::vector<double>>();
            const auto b = layers[l].at("biases").get<std::vector<double>>();
            auto& W = m.weights_[l];
            if (static_cast<Eigen::Index>(w.size()) != W.size() || static_cast<Eigen::Index>(b.size()) != m.biases_[l].size()) {
                throw Error(ErrorCode::kParse, "parameter array length mismatch in layer " + std::to_string(l));
            }
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < W.rows(); ++r) {
                for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[k++];
            }
            for (std::size_t i = 0; i < b.size(); ++i) m.biases_[l][static_cast<Eigen::Index>(i)] = b[i];
        }
        m.version_ = next_version();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, std::string("model document: ") + e.what());
    }
}

}  // namespace hmip
