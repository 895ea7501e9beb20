// BroadcastTo kernel: replicates an input tensor along new or size-1
// dimensions so that it takes on a requested target shape.
//
// This file is a compact stand-in for a real kernel of the same name. It
// keeps the structure that matters for mutation testing: a multi-line
// checker macro guarding the shape-compatibility precondition, followed by
// the computation that assumes the precondition holds.
//
// Broadcasting rules, aligned from the trailing dimension:
//   * a dimension of size 1 in the input may stretch to any size;
//   * otherwise the input and target sizes must agree;
//   * the target may have more dimensions than the input, never fewer.
//
// Examples (input shape -> target shape):
//   [3]       -> [2, 3]        ok, new leading dimension
//   [1, 3]    -> [4, 3]        ok, size-1 dimension stretches
//   [2, 1]    -> [2, 5]        ok, trailing size-1 dimension stretches
//   [2, 3]    -> [3]           rejected, target has fewer dimensions
//   [2, 3]    -> [2, 4]        rejected, 3 cannot stretch to 4
//   [4, 1, 2] -> [4, 3, 2]     ok, middle dimension stretches
//   []        -> [2, 2]        ok, a scalar broadcasts to any shape
//
// The shape check runs before any output is produced. Without it, an
// incompatible target makes SourceIndex read outside the input buffer.
//
// Only the happy path is exercised by the accompanying test driver, which
// is what makes deleting the check a surviving mutant.
//
// The kernel is written against framework_stub.h so that it compiles with
// nothing but a C++17 compiler.
//

#include "framework_stub.h"

namespace {

// True when every aligned input dimension is 1 or equal to the target.
bool BroadcastCompatible(const TensorShape& in, const TensorShape& out) {
  bool ok;
  ok = in.dims() <= out.dims();
  for (int i = 1; ok && i <= in.dims(); ++i) {
    int a, b;
    a = in.dim_size(in.dims() - i);
    b = out.dim_size(out.dims() - i);
    ok = a == 1 || a == b;
  }
  return ok;
}

// Maps a flat output index to the flat input index it reads from.
int SourceIndex(const TensorShape& in, const TensorShape& out, int flat) {
  int src;
  int stride;
  src = 0;
  stride = 1;
  for (int i = 1; i <= out.dims(); ++i) {
    int coord;
    coord = flat % out.dim_size(out.dims() - i);
    flat /= out.dim_size(out.dims() - i);
    if (i <= in.dims()) {
      int extent;
      extent = in.dim_size(in.dims() - i);
      if (extent != 1) src += coord * stride;
      stride *= extent;
    }
  }
  return src;
}

}  // namespace

class BroadcastToOp {
 public:
  void Compute(OpKernelContext* ctx);
};

void BroadcastToOp::Compute(OpKernelContext* ctx) {
  const Tensor& input_tensor = ctx->input(0);
  const TensorShape& input_shape = input_tensor.shape;
  const TensorShape& output_shape = ctx->target_shape();
  OP_REQUIRES(ctx, BroadcastCompatible(input_shape, output_shape),
              errors::InvalidArgument(
                  "Unable to broadcast tensor of shape ", input_shape.DebugString(),
                  " to tensor of shape ", output_shape.DebugString()));

  Tensor* output_tensor;
  output_tensor = ctx->mutable_output();
  output_tensor->shape = output_shape;
  output_tensor->values.resize(output_shape.num_elements());
  for (int i = 0; i < output_shape.num_elements(); ++i) {
    output_tensor->values[i] = input_tensor.values[SourceIndex(input_shape, output_shape, i)];
  }
}
