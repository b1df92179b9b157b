#include "aqgen/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace aqgen::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " and " +
                              std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace

Parameter& ParameterStore::create(const std::string& name, int rows, int cols) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  p->moment1 = Mat::Zero(rows, cols);
  p->moment2 = Mat::Zero(rows, cols);
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  by_name_[name] = raw;
  return *raw;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return *it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return *it->second;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p->grad.setZero();
}

void ParameterStore::adam_step(double learning_rate, double beta1, double beta2, double epsilon) {
  ++adam_steps_;
  double correction1 = 1.0 - std::pow(beta1, static_cast<double>(adam_steps_));
  double correction2 = 1.0 - std::pow(beta2, static_cast<double>(adam_steps_));
  for (auto& p : params_) {
    if (!p->trainable) continue;
    p->moment1 = beta1 * p->moment1 + (1.0 - beta1) * p->grad;
    p->moment2 = beta2 * p->moment2 + (1.0 - beta2) * p->grad.cwiseProduct(p->grad);
    Mat m_hat = p->moment1 / correction1;
    Mat v_hat = p->moment2 / correction2;
    p->value -= learning_rate * m_hat.cwiseQuotient((v_hat.array().sqrt() + epsilon).matrix());
    p->grad.setZero();
  }
}

std::map<std::string, Mat> ParameterStore::snapshot() const {
  std::map<std::string, Mat> snap;
  for (const auto& p : params_) snap[p->name] = p->value;
  return snap;
}

void ParameterStore::restore(const std::map<std::string, Mat>& snap) {
  for (auto& p : params_) {
    auto it = snap.find(p->name);
    if (it != snap.end()) p->value = it->second;
  }
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& p : params_) {
    nlohmann::json entry;
    entry["rows"] = p->rows();
    entry["cols"] = p->cols();
    std::vector<double> data;
    data.reserve(static_cast<size_t>(p->rows()) * static_cast<size_t>(p->cols()));
    for (int r = 0; r < p->rows(); ++r)
      for (int c = 0; c < p->cols(); ++c) data.push_back(p->value(r, c));
    entry["data"] = std::move(data);
    j[p->name] = std::move(entry);
  }
  return j;
}

void ParameterStore::load_json(const nlohmann::json& j) {
  for (auto& p : params_) {
    if (!j.contains(p->name)) throw std::invalid_argument("checkpoint misses '" + p->name + "'");
    const auto& entry = j.at(p->name);
    int rows = entry.at("rows").get<int>();
    int cols = entry.at("cols").get<int>();
    if (rows != p->rows() || cols != p->cols())
      throw std::invalid_argument("checkpoint shape mismatch for '" + p->name + "'");
    const auto& data = entry.at("data");
    if (static_cast<int>(data.size()) != rows * cols)
      throw std::invalid_argument("checkpoint data size mismatch for '" + p->name + "'");
    size_t k = 0;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) p->value(r, c) = data[k++].get<double>();
    p->grad.setZero();
    p->moment1.setZero();
    p->moment2.setZero();
  }
  adam_steps_ = 0;
}

Value Tape::push(Mat value, bool needs, std::function<void(Tape&)> back) {
  Node node;
  node.value = std::move(value);
  node.needs = track_ && needs;
  if (node.needs) node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Mat& Tape::grad_buffer(int index) {
  Node& n = nodes_[static_cast<size_t>(index)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Value Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Value Tape::param(Parameter& p) {
  bool track_grad = p.trainable;
  Parameter* sink = &p;
  Value v = push(p.value, track_grad, nullptr);
  if (track_ && track_grad) {
    Node& node = nodes_.back();
    node.sink = sink;
    int idx = v.index_;
    node.back = [idx, sink](Tape& t) { sink->grad += t.grad_buffer(idx); };
  }
  return v;
}

Value Tape::add(Value a, Value b) {
  const Mat& va = a.val();
  const Mat& vb = b.val();
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("add", va, vb);
  int ia = a.index_, ib = b.index_;
  bool track_grad = needs(a) || needs(b);
  Value out = push(va + vb, track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    bool na = this->needs(a), nb = this->needs(b);
    nodes_.back().back = [=](Tape& t) {
      const Mat& g = t.grad_buffer(io);
      if (na) t.grad_buffer(ia) += g;
      if (nb) t.grad_buffer(ib) += g;
    };
  }
  return out;
}

Value Tape::sub(Value a, Value b) {
  const Mat& va = a.val();
  const Mat& vb = b.val();
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("sub", va, vb);
  int ia = a.index_, ib = b.index_;
  bool track_grad = needs(a) || needs(b);
  Value out = push(va - vb, track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    bool na = this->needs(a), nb = this->needs(b);
    nodes_.back().back = [=](Tape& t) {
      const Mat& g = t.grad_buffer(io);
      if (na) t.grad_buffer(ia) += g;
      if (nb) t.grad_buffer(ib) -= g;
    };
  }
  return out;
}

Value Tape::matmul(Value a, Value b) {
  const Mat& va = a.val();
  const Mat& vb = b.val();
  if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
  int ia = a.index_, ib = b.index_;
  bool track_grad = needs(a) || needs(b);
  Value out = push(va * vb, track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    bool na = this->needs(a), nb = this->needs(b);
    nodes_.back().back = [=](Tape& t) {
      const Mat& g = t.grad_buffer(io);
      if (na) t.grad_buffer(ia) += g * t.value_of(ib).transpose();
      if (nb) t.grad_buffer(ib) += t.value_of(ia).transpose() * g;
    };
  }
  return out;
}

Value Tape::cmul(Value a, Value b) {
  const Mat& va = a.val();
  const Mat& vb = b.val();
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_error("cmul", va, vb);
  int ia = a.index_, ib = b.index_;
  bool track_grad = needs(a) || needs(b);
  Value out = push(va.cwiseProduct(vb), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    bool na = this->needs(a), nb = this->needs(b);
    nodes_.back().back = [=](Tape& t) {
      const Mat& g = t.grad_buffer(io);
      if (na) t.grad_buffer(ia) += g.cwiseProduct(t.value_of(ib));
      if (nb) t.grad_buffer(ib) += g.cwiseProduct(t.value_of(ia));
    };
  }
  return out;
}

Value Tape::scale(Value a, double factor) {
  int ia = a.index_;
  bool track_grad = needs(a);
  Value out = push(a.val() * factor, track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    nodes_.back().back = [=](Tape& t) { t.grad_buffer(ia) += factor * t.grad_buffer(io); };
  }
  return out;
}

Value Tape::tanh(Value a) {
  int ia = a.index_;
  bool track_grad = needs(a);
  Value out = push(a.val().array().tanh().matrix(), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    nodes_.back().back = [=](Tape& t) {
      const Mat& y = t.value_of(io);
      t.grad_buffer(ia) +=
          t.grad_buffer(io).cwiseProduct((1.0 - y.array().square()).matrix());
    };
  }
  return out;
}

Value Tape::sigmoid(Value a) {
  int ia = a.index_;
  bool track_grad = needs(a);
  Mat y = (1.0 / (1.0 + (-a.val().array()).exp())).matrix();
  Value out = push(std::move(y), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    nodes_.back().back = [=](Tape& t) {
      const Mat& s = t.value_of(io);
      t.grad_buffer(ia) +=
          t.grad_buffer(io).cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
    };
  }
  return out;
}

Value Tape::log(Value a) {
  int ia = a.index_;
  bool track_grad = needs(a);
  Value out = push(a.val().array().log().matrix(), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    nodes_.back().back = [=](Tape& t) {
      t.grad_buffer(ia) += t.grad_buffer(io).cwiseQuotient(t.value_of(ia));
    };
  }
  return out;
}

Value Tape::softmax(Value a) {
  const Mat& va = a.val();
  if (va.cols() != 1) throw std::invalid_argument("softmax: expects a column vector");
  int ia = a.index_;
  bool track_grad = needs(a);
  Eigen::ArrayXd shifted = va.col(0).array() - va.col(0).maxCoeff();
  Eigen::ArrayXd ex = shifted.exp();
  Mat y = (ex / ex.sum()).matrix();
  Value out = push(std::move(y), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    nodes_.back().back = [=](Tape& t) {
      const Mat& y = t.value_of(io);
      const Mat& g = t.grad_buffer(io);
      double inner = (y.col(0).array() * g.col(0).array()).sum();
      t.grad_buffer(ia) += (y.col(0).array() * (g.col(0).array() - inner)).matrix();
    };
  }
  return out;
}

Value Tape::sum(Value a) {
  int ia = a.index_;
  bool track_grad = needs(a);
  Mat out(1, 1);
  out(0, 0) = a.val().sum();
  Value v = push(std::move(out), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = v.index_;
    nodes_.back().back = [=](Tape& t) {
      const Mat& src = t.value_of(ia);
      t.grad_buffer(ia) +=
          Mat::Constant(src.rows(), src.cols(), t.grad_buffer(io)(0, 0));
    };
  }
  return v;
}

Value Tape::dot(Value a, Value b) {
  const Mat& va = a.val();
  const Mat& vb = b.val();
  if (va.rows() != vb.rows() || va.cols() != 1 || vb.cols() != 1) shape_error("dot", va, vb);
  int ia = a.index_, ib = b.index_;
  bool track_grad = needs(a) || needs(b);
  Mat out(1, 1);
  out(0, 0) = va.col(0).dot(vb.col(0));
  Value v = push(std::move(out), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = v.index_;
    bool na = this->needs(a), nb = this->needs(b);
    nodes_.back().back = [=](Tape& t) {
      double g = t.grad_buffer(io)(0, 0);
      if (na) t.grad_buffer(ia) += g * t.value_of(ib);
      if (nb) t.grad_buffer(ib) += g * t.value_of(ia);
    };
  }
  return v;
}

Value Tape::transpose(Value a) {
  int ia = a.index_;
  bool track_grad = needs(a);
  Value out = push(a.val().transpose(), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    nodes_.back().back = [=](Tape& t) {
      t.grad_buffer(ia) += t.grad_buffer(io).transpose();
    };
  }
  return out;
}

Value Tape::vconcat(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("vconcat: no parts");
  Eigen::Index cols = parts[0].val().cols();
  Eigen::Index rows = 0;
  bool track_grad = false;
  for (const Value& p : parts) {
    if (p.val().cols() != cols) shape_error("vconcat", parts[0].val(), p.val());
    rows += p.val().rows();
    track_grad = track_grad || needs(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Value& p : parts) {
    out.middleRows(at, p.val().rows()) = p.val();
    at += p.val().rows();
  }
  Value v = push(std::move(out), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = v.index_;
    std::vector<std::pair<int, bool>> sources;
    sources.reserve(parts.size());
    for (const Value& p : parts) sources.emplace_back(p.index_, this->needs(p));
    nodes_.back().back = [=](Tape& t) {
      const Mat& g = t.grad_buffer(io);
      Eigen::Index offset = 0;
      for (auto [idx, need] : sources) {
        Eigen::Index r = t.value_of(idx).rows();
        if (need) t.grad_buffer(idx) += g.middleRows(offset, r);
        offset += r;
      }
    };
  }
  return v;
}

Value Tape::hconcat(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("hconcat: no parts");
  Eigen::Index rows = parts[0].val().rows();
  Eigen::Index cols = 0;
  bool track_grad = false;
  for (const Value& p : parts) {
    if (p.val().rows() != rows) shape_error("hconcat", parts[0].val(), p.val());
    cols += p.val().cols();
    track_grad = track_grad || needs(p);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Value& p : parts) {
    out.middleCols(at, p.val().cols()) = p.val();
    at += p.val().cols();
  }
  Value v = push(std::move(out), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = v.index_;
    std::vector<std::pair<int, bool>> sources;
    sources.reserve(parts.size());
    for (const Value& p : parts) sources.emplace_back(p.index_, this->needs(p));
    nodes_.back().back = [=](Tape& t) {
      const Mat& g = t.grad_buffer(io);
      Eigen::Index offset = 0;
      for (auto [idx, need] : sources) {
        Eigen::Index c = t.value_of(idx).cols();
        if (need) t.grad_buffer(idx) += g.middleCols(offset, c);
        offset += c;
      }
    };
  }
  return v;
}

Value Tape::row(Value table, int r) {
  const Mat& vt = table.val();
  if (r < 0 || r >= vt.rows()) throw std::out_of_range("row: index out of range");
  int it = table.index_;
  bool track_grad = needs(table);
  Value out = push(vt.row(r).transpose(), track_grad, nullptr);
  if (track_ && track_grad) {
    int io = out.index_;
    nodes_.back().back = [=](Tape& t) {
      t.grad_buffer(it).row(r) += t.grad_buffer(io).col(0).transpose();
    };
  }
  return out;
}

void Tape::backward(Value root) {
  if (!track_) throw std::logic_error("backward: tape is in inference mode");
  if (root.val().rows() != 1 || root.val().cols() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  grad_buffer(root.index_)(0, 0) = 1.0;
  for (int i = root.index_; i >= 0; --i) {
    Node& node = nodes_[static_cast<size_t>(i)];
    if (!node.needs || node.grad.size() == 0 || !node.back) continue;
    node.back(*this);
  }
}

Mat Tape::grad_of(Value v) const {
  const Node& node = nodes_[static_cast<size_t>(v.index_)];
  if (node.grad.size() == 0) return Mat::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

}  // namespace aqgen::ad
