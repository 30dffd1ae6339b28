#ifndef ALCA_OPTIM_HPP
#define ALCA_OPTIM_HPP

#include <cmath>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace alca {

// Adam with decoupled weight decay. The paper-default hyperparameters live in
// the constructor defaults; betas/epsilon are the canonical Adam constants.
template <class S>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double base_lr = 1e-3, double weight_decay = 1e-6,
                         double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : base_lr_(base_lr),
        weight_decay_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        current_lr_(base_lr) {}

  void attach(const std::vector<Tensor<S>>& params,
              const std::vector<std::string>& names = {}) {
    params_ = params;
    names_ = names;
    m_.clear();
    v_.clear();
    for (const auto& p : params_) {
      m_.emplace_back(static_cast<size_t>(p.numel()), S(0));
      v_.emplace_back(static_cast<size_t>(p.numel()), S(0));
    }
    step_count_ = 0;
  }

  void set_lr(double lr) {
    ALCA_THROW_IF(lr <= 0.0 || lr > base_lr_, ErrorKind::Config,
                  "adam: lr ", lr, " outside (0, ", base_lr_, "]");
    current_lr_ = lr;
  }
  double current_lr() const { return current_lr_; }
  double base_lr() const { return base_lr_; }
  int64_t step_count() const { return step_count_; }

  // One update over all attached parameters from their .grad() buffers.
  // A non-finite gradient anywhere rejects the whole update.
  void step() {
    for (size_t i = 0; i < params_.size(); ++i) {
      for (S g : params_[i].grad()) {
        ALCA_THROW_IF(!std::isfinite(static_cast<double>(g)), ErrorKind::Runtime,
                      "adam: non-finite gradient in parameter '",
                      i < names_.size() ? names_[i] : std::to_string(i),
                      "', update rejected");
      }
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto w = params_[i].raw();
      const auto g = params_[i].grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t k = 0; k < w.size(); ++k) {
        m[k] = static_cast<S>(beta1_) * m[k] + static_cast<S>(1.0 - beta1_) * g[k];
        v[k] = static_cast<S>(beta2_) * v[k] + static_cast<S>(1.0 - beta2_) * g[k] * g[k];
        const double mhat = static_cast<double>(m[k]) / bc1;
        const double vhat = static_cast<double>(v[k]) / bc2;
        double upd = current_lr_ * mhat / (std::sqrt(vhat) + eps_);
        upd += current_lr_ * weight_decay_ * static_cast<double>(w[k]);
        w[k] -= static_cast<S>(upd);
      }
    }
  }

 private:
  double base_lr_;
  double weight_decay_;
  double beta1_, beta2_, eps_;
  double current_lr_;
  int64_t step_count_ = 0;
  std::vector<Tensor<S>> params_;
  std::vector<std::string> names_;
  std::vector<std::vector<S>> m_, v_;
};

// lr(epoch) = 0.5 * base * (1 + cos(pi * epoch / total)); monotone
// nonincreasing from base at epoch 0 down to 0 at epoch == total.
inline double cosine_lr(int epoch, int total_epochs, double base_lr) {
  ALCA_THROW_IF(total_epochs <= 0, ErrorKind::Config,
                "cosine_lr: total_epochs must be positive");
  ALCA_THROW_IF(epoch < 0 || epoch > total_epochs, ErrorKind::Config,
                "cosine_lr: epoch ", epoch, " outside [0, ", total_epochs, "]");
  constexpr double kPi = 3.14159265358979323846;
  return 0.5 * base_lr *
         (1.0 + std::cos(kPi * static_cast<double>(epoch) /
                         static_cast<double>(total_epochs)));
}

}  // namespace alca

#endif
