#pragma once

// Dense reverse-mode automatic differentiation over row-major tensors.
//
// Every op that touches a tensor requiring gradients appends a record to the
// calling thread's tape. backward() replays the tape in reverse and clears it.
// Values are stored as doubles; in 32-bit mode every op output is rounded to
// float so numerics follow single precision.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gslb::ad {

using Shape = std::vector<std::size_t>;

enum class Precision { f32, f64 };

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void set_precision(Precision p);
Precision precision();
/// Rounds to the active precision.
double quantize(double v);

struct Node;

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    /// Rows of a 2-D tensor (1 for rank < 2).
    std::size_t rows() const;
    /// Trailing dimension.
    std::size_t cols() const;

    std::span<const double> values() const&;
    std::span<const double> values() const&& = delete;
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const&;
    std::span<const double> grad() const&& = delete;
    std::span<double> mutable_grad();
    void zero_grad();

    bool same_storage(const Tensor& other) const { return node_ == other.node_; }
    std::string shape_string() const;

    const std::shared_ptr<Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node> node_;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first touched
    bool requires_grad = false;

    std::span<double> ensure_grad();
};

/// Ordered record of executed ops for backward replay.
class Tape {
public:
    struct Record {
        std::string op;
        std::vector<std::shared_ptr<Node>> inputs;
        std::shared_ptr<Node> output;
        std::function<void()> backward;
    };

    void record(Record r) { records_.push_back(std::move(r)); }
    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }
    void backward(const Tensor& loss);

private:
    std::vector<Record> records_;
};

/// The calling thread's tape.
Tape& active_tape();
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Seeds the loss with gradient 1 and propagates into every reachable tensor.
void backward(const Tensor& loss);

/// Row/column visibility for attention; allowed(r, c) == true means query r
/// may attend to key c. An empty mask allows everything.
struct AttentionMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> allowed;

    bool empty() const { return allowed.empty(); }
    bool at(std::size_t r, std::size_t c) const { return allowed[r * cols + c] != 0; }

    static AttentionMask causal(std::size_t n);
    /// Every query may see key c iff key_valid[c].
    static AttentionMask keys(std::size_t queries, const std::vector<bool>& key_valid);
};

enum class Activation { relu, gelu };

// Core ops. Matrices are 2-D [rows, cols]; vectors are 1-D.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
/// Adds a length-cols vector to every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor softmax_rows(const Tensor& a, const AttentionMask& mask = {});
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor activate(const Tensor& a, Activation act);
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor sum(const Tensor& a);
/// Σ_r −log softmax(logits[r])[targets[r]], skipping rows whose target equals ignore.
Tensor cross_entropy_sum(const Tensor& logits, std::span<const std::int32_t> targets,
                         std::int32_t ignore = -1);

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            const AttentionMask& mask, std::size_t heads);

}  // namespace gslb::ad
