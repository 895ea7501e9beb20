// Minimal stand-ins for the kernel framework types used by broadcast_to_op.cc.
#ifndef FRAMEWORK_STUB_H
#define FRAMEWORK_STUB_H

#include <sstream>
#include <string>
#include <vector>

class Status {
 public:
  Status() : ok_(true) {}
  explicit Status(std::string msg) : ok_(false), msg_(msg) {}
  bool ok() const { return ok_; }
  const std::string& message() const { return msg_; }

 private:
  bool ok_;
  std::string msg_;
};

namespace errors {
template <typename... Args>
Status InvalidArgument(Args... args) {
  std::ostringstream out;
  (out << ... << args);
  return Status(out.str());
}
}  // namespace errors

class TensorShape {
 public:
  TensorShape() {}
  explicit TensorShape(std::vector<int> dims) : dims_(dims) {}
  int dims() const { return static_cast<int>(dims_.size()); }
  int dim_size(int d) const { return dims_[d]; }
  int num_elements() const {
    int n;
    n = 1;
    for (int d : dims_) n *= d;
    return n;
  }
  std::string DebugString() const {
    std::ostringstream out;
    out << "[";
    for (int i = 0; i < dims(); ++i) out << (i ? "," : "") << dims_[i];
    out << "]";
    return out.str();
  }

 private:
  std::vector<int> dims_;
};

struct Tensor {
  TensorShape shape;
  std::vector<float> values;
};

class OpKernelContext {
 public:
  OpKernelContext(Tensor input, TensorShape target) : input_(input), target_(target) {}
  const Tensor& input(int) const { return input_; }
  const TensorShape& target_shape() const { return target_; }
  void CtxFailure(const Status& s) { status_ = s; }
  const Status& status() const { return status_; }
  Tensor* mutable_output() { return &output_; }

 private:
  Tensor input_;
  TensorShape target_;
  Tensor output_;
  Status status_;
};

#define OP_REQUIRES(CTX, EXP, STATUS) \
  do {                                \
    if (!(EXP)) {                     \
      (CTX)->CtxFailure(STATUS);      \
      return;                         \
    }                                 \
  } while (0)

#endif  // FRAMEWORK_STUB_H
