#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace gpr::autodiff {

using Matrix = Eigen::MatrixXd;

// Reverse-mode tape over dense matrices. Values are computed eagerly; each
// op records a closure that scatters its output gradient to its inputs.
class Tape {
  public:
    int constant(Matrix value);
    // Leaf bound to an external parameter; its gradient is accumulated into
    // param_grads() keyed by the parameter pointer.
    int param(const Matrix* p);

    const Matrix& value(int id) const { return nodes_[id].value; }
    Matrix& grad(int id) { return nodes_[id].grad; }

    int matmul(int a, int b);
    int add(int a, int b);
    int scale(int a, double s);
    int add_rowvec(int a, int bias);  // bias is 1 x c, broadcast over rows
    int transpose(int a);
    int slice_cols(int a, int start, int len);
    int concat_cols(int a, int b);
    // out(i, j) = a(i, idx(i, j))
    int gather_cols(int a, const Eigen::MatrixXi& idx);
    int gather_rows(int a, const std::vector<int>& rows);
    // row-wise softmax over entries where mask != 0; masked entries are 0
    int softmax_rows_masked(int a, const Matrix& mask);
    int mean_rows(int a);  // 1 x c
    int max_rows(int a);   // 1 x c
    int l2_normalize_row(int a);
    int dot_rows(int a, int b);  // (1 x c) . (1 x c) -> 1 x 1
    int tanh_op(int a);
    int sigmoid(int a);
    int one_minus(int a);
    int hinge(int a, double margin);             // max(0, a - margin)
    int bce_with_logit(int z, double target);    // numerically stable, 1 x 1

    // Seeds d(output)/d(output) = 1 and runs the tape in reverse. `output`
    // must be 1 x 1.
    void backward(int output);

    const std::unordered_map<const Matrix*, Matrix>& param_grads() const {
        return param_grads_;
    }

  private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&)> back;
        const Matrix* bound = nullptr;
    };

    int push(Matrix value, std::function<void(Tape&)> back = nullptr);

    std::vector<Node> nodes_;
    std::unordered_map<const Matrix*, Matrix> param_grads_;
};

}  // namespace gpr::autodiff
