#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vcat::ad {

/// Reverse-mode autodiff over a per-step tape.
///
/// The optimization rebuilds a fresh Graph every attack step: the
/// perturbation enters as the single differentiable input, encoder weights
/// and exemplar embeddings enter as constants, and backward() accumulates
/// d(loss)/d(input) through the augmentation pipeline and the encoders.
/// Nodes are created in topological order by construction, so backward is a
/// single reverse sweep. Storage is float32 throughout.
class Graph {
  public:
    using Id = int32_t;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Id input(std::vector<int> shape, std::vector<float> data);
    Id constant(std::vector<int> shape, std::vector<float> data);
    Id scalar_const(float v) { return constant({1}, {v}); }

    // Elementwise. add/sub/mul accept equal shapes, or a [1] scalar node on
    // either side (add/mul) / the right side (sub, div).
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id div(Id a, Id b);  // b must be a [1] scalar node
    Id scale(Id a, float c);
    Id add_scalar(Id a, float c);
    Id neg(Id a) { return scale(a, -1.0f); }

    Id relu(Id a);
    Id gelu(Id a);
    Id tanh_(Id a);
    Id exp_(Id a);
    Id log_(Id a);
    Id sqrt_(Id a);
    /// Smooth rounding surrogate: x - sin(2*pi*x)/(2*pi).
    Id soft_round(Id a);
    /// Clamp to [lo,hi]; gradient passes where lo <= x <= hi.
    Id clamp(Id a, float lo, float hi);

    // Reductions to [1].
    Id sum(Id a);
    Id mean(Id a);

    // Linear algebra on [m,n] matrices.
    Id matmul(Id a, Id b);
    Id transpose(Id a);
    Id softmax_rows(Id a);
    Id log_softmax(Id a);  // 1-D input
    Id layernorm_rows(Id a, Id gamma, Id beta, float eps = 1e-5f);

    // Structure.
    Id reshape(Id a, std::vector<int> shape);
    Id select(Id a, std::vector<int> flat_indices);
    Id gather_rows(Id a, std::vector<int> rows);
    Id concat_rows(Id a, Id b);
    Id slice_rows(Id a, int r0, int r1);
    Id concat_vec(Id a, Id b);
    Id mean_rows(Id a);  // [m,n] -> [n]

    // Image ops on [h,w,c] (or [h,w] planes where noted).
    Id crop2d(Id a, int y0, int x0, int oh, int ow);
    Id pad2d(Id a, int top, int bottom, int left, int right, float value);
    Id pad_replicate2d(Id a, int bottom, int right);  // [h,w] plane
    Id resize_bilinear(Id a, int oh, int ow);
    /// Pixelwise out = M * rgb + bias for constant 3x3 M (row-major).
    Id color_transform(Id a, const float M[9], const float bias[3]);
    Id split_channel(Id a, int ch);          // [h,w,c] -> [h,w]
    Id merge_channels(Id r, Id g, Id b);     // 3x [h,w] -> [h,w,3]
    /// Per 8x8 block: forward ? T*X*T' : T'*X*T on an [h,w] plane
    /// (h, w multiples of 8); T is the orthonormal 8-point DCT matrix.
    Id dct8x8(Id a, bool forward);

    /// Cosine similarity of vector e [d] against each row of a constant
    /// matrix rows [n,d]; result [n]. Throws if any norm is zero.
    Id cosine_rows(Id e, Id rows);

    void backward(Id loss);

    std::span<const float> val(Id id) const;
    std::span<const float> grad(Id id) const;
    const std::vector<int>& shape(Id id) const;
    size_t num_nodes() const { return nodes_.size(); }

  private:
    struct Node {
        std::vector<int> shape;
        std::vector<float> val;
        std::vector<float> grad;
        std::function<void()> back;  // may be empty (leaf)
        bool requires_grad = false;
    };

    Id make(std::vector<int> shape, std::vector<float> val, bool req,
            std::function<void()> back = {});
    Node& node(Id id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(Id id) const { return nodes_[static_cast<size_t>(id)]; }
    static size_t numel(const std::vector<int>& shape);
    void check_same_shape(Id a, Id b, const char* op) const;

    std::vector<Node> nodes_;
};

/// Convenience: evaluate a scalar-valued builder at x and return
/// (value, d/dx) in one shot.
struct EvalResult {
    float value = 0.0f;
    std::vector<float> grad;
};
EvalResult value_and_grad(const std::vector<int>& shape, const std::vector<float>& x,
                          const std::function<Graph::Id(Graph&, Graph::Id)>& build);

}  // namespace vcat::ad
