#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace aqgen::ad {

using Mat = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Value {
 public:
  Value() = default;
  const Mat& val() const;
  int index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Value(Tape* tape, int index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  int index_ = -1;
};

/// A named trainable array: values, gradient accumulator, Adam moments.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat moment1;
  Mat moment2;
  bool trainable = true;

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
};

/// Owns parameters in deterministic (insertion) order.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, int rows, int cols);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Parameter* find(const std::string& name);
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

  void zero_grads();
  /// One Adam update from the accumulated gradients, then clears them.
  void adam_step(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                 double epsilon = 1e-8);

  std::map<std::string, Mat> snapshot() const;
  void restore(const std::map<std::string, Mat>& snap);

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> by_name_;
  long long adam_steps_ = 0;
};

/// Reverse-mode tape over double-precision matrices. Primitives: matrix
/// multiply, elementwise add/multiply, concatenation, row gather, tanh,
/// sigmoid, softmax, log, sum (plus scale/transpose/dot conveniences).
/// Build one tape per forward pass; `backward` accumulates into the
/// gradients of every trainable parameter that was fed in via `param`.
class Tape {
 public:
  /// With track=false no backward closures are recorded (inference mode).
  explicit Tape(bool track = true) : track_(track) {}

  Value constant(Mat value);
  Value param(Parameter& p);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value matmul(Value a, Value b);
  Value cmul(Value a, Value b);
  Value scale(Value a, double factor);
  Value tanh(Value a);
  Value sigmoid(Value a);
  Value log(Value a);
  /// Softmax over a column vector (max-shifted).
  Value softmax(Value a);
  Value sum(Value a);
  Value dot(Value a, Value b);
  Value transpose(Value a);
  /// Stacks column vectors (or matrices with equal column counts) vertically.
  Value vconcat(const std::vector<Value>& parts);
  /// Stacks matrices with equal row counts horizontally.
  Value hconcat(const std::vector<Value>& parts);
  /// Gathers one row of a matrix as a column vector.
  Value row(Value table, int r);

  /// Reverse pass from a scalar (1x1) node.
  void backward(Value root);

  const Mat& value_of(int index) const { return nodes_[static_cast<size_t>(index)].value; }
  /// Gradient of a node after backward; zeros if it was never reached.
  Mat grad_of(Value v) const;

  size_t size() const { return nodes_.size(); }
  bool tracking() const { return track_; }

 private:
  struct Node {
    Mat value;
    Mat grad;  // empty until touched
    bool needs = false;
    std::function<void(Tape&)> back;
    Parameter* sink = nullptr;
  };

  Value push(Mat value, bool needs, std::function<void(Tape&)> back);
  Mat& grad_buffer(int index);
  bool needs(Value v) const { return nodes_[static_cast<size_t>(v.index_)].needs; }

  std::vector<Node> nodes_;
  bool track_ = true;
};

inline const Mat& Value::val() const { return tape_->value_of(index_); }

}  // namespace aqgen::ad
