#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "voltreg/vr_env.hpp"

namespace voltreg {

/// Column-per-transition minibatch.
struct Batch {
  Eigen::MatrixXd s;
  Eigen::MatrixXd a;
  Eigen::VectorXd r;
  Eigen::MatrixXd s_next;
  Eigen::VectorXd terminal;  // 1.0 at episode ends
  std::vector<std::size_t> slots;

  Eigen::Index size() const { return r.size(); }
};

/// Fixed-capacity ring; the oldest transition is overwritten once full.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim);

  void push(const Transition& t);
  /// `n` distinct slots drawn uniformly. Requires n <= size().
  Batch sample(std::size_t n, std::mt19937_64& rng) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return size_ == capacity_; }
  std::uint64_t total_pushed() const { return pushed_; }
  /// Insertion sequence number (from 0) of the transition held in `slot`.
  std::uint64_t sequence(std::size_t slot) const { return seq_.at(slot); }

 private:
  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  Eigen::MatrixXd s_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd r_;
  Eigen::MatrixXd s_next_;
  Eigen::VectorXd terminal_;
  std::vector<std::uint64_t> seq_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::uint64_t pushed_ = 0;
};

}  // namespace voltreg
