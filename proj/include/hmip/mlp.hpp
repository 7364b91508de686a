#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace hmip {

enum class OutputActivation { kIdentity, kSigmoid };

/// Feedforward network with ReLU hidden layers.
class Mlp {
public:
    struct Cache {
        std::uint64_t version = 0;
        std::vector<Eigen::VectorXd> inputs;  // input of each layer
        std::vector<Eigen::VectorXd> pre;     // pre-activation of each layer
        Eigen::VectorXd output;
    };

    struct Gradients {
        std::vector<Eigen::MatrixXd> weights;
        std::vector<Eigen::VectorXd> biases;

        void add(const Gradients& other, double scale = 1.0);
        void scale(double factor);
        Eigen::VectorXd flatten() const;
    };

    Mlp() = default;
    /// He initialization, N(0, 2 / fan_in) weights and zero biases.
    Mlp(std::vector<int> layer_dims, OutputActivation output, std::uint64_t seed);
    /// All parameters zero.
    static Mlp zeros(std::vector<int> layer_dims, OutputActivation output);

    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    int num_layers() const { return static_cast<int>(weights_.size()); }
    const std::vector<int>& layer_dims() const { return dims_; }
    OutputActivation output_activation() const { return output_; }
    std::size_t parameter_count() const;
    std::uint64_t version() const { return version_; }

    const Eigen::MatrixXd& weight(int layer) const { return weights_[layer]; }
    const Eigen::VectorXd& bias(int layer) const { return biases_[layer]; }
    void set_layer(int layer, Eigen::MatrixXd w, Eigen::VectorXd b);

    Eigen::VectorXd forward(std::span<const double> input) const;
    Eigen::VectorXd forward(std::span<const double> input, Cache& cache) const;

    /// Gradient of upstream^T output with respect to every parameter, using the
    /// activations in `cache`. Throws kStaleActivationCache if parameters changed
    /// since that forward pass.
    Gradients backward(const Cache& cache, std::span<const double> upstream) const;

    Gradients zero_gradients() const;
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& flat);
    /// params -= step * direction (same layout as Gradients).
    void apply(const Gradients& direction, double step);

    nlohmann::json to_json() const;
    static Mlp from_json(const nlohmann::json& doc);

private:
    void check_dims() const;

    std::vector<int> dims_;
    OutputActivation output_ = OutputActivation::kIdentity;
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
    std::uint64_t version_ = 1;
};

}  // namespace hmip
