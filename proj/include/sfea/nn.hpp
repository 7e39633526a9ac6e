#pragma once

#include <cstdint>
#include <vector>

#include "sfea/tensor.hpp"

namespace sfea {

// 3x3 convolution, stride 1, zero padding 1 (shape-preserving). Weights are
// laid out [out_ch][kernel position 0..8][in_ch], matching the im2col row
// order so the forward pass is a single GEMM.
struct ConvLayer {
    int in_ch = 0, out_ch = 0;
    std::vector<double> w;  // out_ch * 9 * in_ch
    std::vector<double> b;  // out_ch

    ConvLayer() = default;
    ConvLayer(int in, int out) : in_ch(in), out_ch(out), w(static_cast<std::size_t>(out) * 9 * in, 0.0), b(out, 0.0) {}
};

// Per-layer parameter gradients, parallel to a layer roster.
struct Gradients {
    std::vector<std::vector<double>> dw, db;

    void init_like(const std::vector<ConvLayer>& layers);
    void zero();
    void scale(double s);
};

// out = conv(in); `in` must have layer.in_ch channels.
Tensor conv_forward(const ConvLayer& layer, const Tensor& in);

// Accumulates dW/db for `layer_index` into grads and returns d(loss)/d(in).
Tensor conv_backward(const ConvLayer& layer, const Tensor& in, const Tensor& dout,
                     Gradients& grads, int layer_index);

// Smooth activations (chosen everywhere over kinked ones so finite-difference
// gradient audits are two-sided valid).
Tensor silu(const Tensor& z);
Tensor silu_backward(const Tensor& z, const Tensor& da);
Tensor sigmoid(const Tensor& z);
// d(loss)/dz given d(loss)/d(sigmoid(z)) and the saved activation a.
Tensor sigmoid_backward_from_act(const Tensor& a, const Tensor& da);
// Per-pixel softmax across channels.
Tensor softmax_channels(const Tensor& z);

// 2x2 mean pooling; spatial dims must be even.
Tensor avgpool2(const Tensor& in);
Tensor avgpool2_backward(int in_h, int in_w, const Tensor& dout);

// Nearest-neighbor 2x upsampling.
Tensor upsample2(const Tensor& in);
Tensor upsample2_backward(const Tensor& dout);

// Channel concatenation [a | b] and its gradient split.
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& dcat, int a_ch, Tensor& da, Tensor& db);

// Adam over the roster's flattened parameters.
struct AdamState {
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
    long step = 0;

    void init_like(const std::vector<ConvLayer>& layers);
};

struct AdamConfig {
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(std::vector<ConvLayer>& layers, const Gradients& grads, AdamState& state,
               double lr, const AdamConfig& cfg = {});

// He-style init: weights ~ N(0, sqrt(2 / fan_in)), zero bias.
void init_conv(ConvLayer& layer, Rng& rng);

std::size_t param_count(const std::vector<ConvLayer>& layers);
std::vector<double> flatten_params(const std::vector<ConvLayer>& layers);
void set_params(std::vector<ConvLayer>& layers, std::span<const double> flat);
std::uint64_t params_digest(const std::vector<ConvLayer>& layers);

}  // namespace sfea
