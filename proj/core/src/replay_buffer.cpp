#include "voltreg/replay_buffer.hpp"

#include <algorithm>
#include <cmath>

#include "voltreg/error.hpp"

namespace voltreg {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  if (capacity == 0) fail(ErrorCategory::kConfig, "replay buffer capacity must be positive");
  const auto c = static_cast<Eigen::Index>(capacity);
  s_.resize(static_cast<Eigen::Index>(state_dim), c);
  a_.resize(static_cast<Eigen::Index>(action_dim), c);
  r_.resize(c);
  s_next_.resize(static_cast<Eigen::Index>(state_dim), c);
  terminal_.resize(c);
  seq_.assign(capacity, 0);
}

void ReplayBuffer::push(const Transition& t) {
  if (static_cast<std::size_t>(t.s.size()) != state_dim_ || static_cast<std::size_t>(t.s_next.size()) != state_dim_ ||
      static_cast<std::size_t>(t.a.size()) != action_dim_)
    fail(ErrorCategory::kValidation, "transition shape does not match the replay buffer");
  if (!t.s.allFinite() || !t.a.allFinite() || !t.s_next.allFinite() || !std::isfinite(t.r))
    fail(ErrorCategory::kNumerical, "non-finite transition pushed to replay buffer");
  const auto c = static_cast<Eigen::Index>(cursor_);
  s_.col(c) = t.s;
  a_.col(c) = t.a;
  r_[c] = t.r;
  s_next_.col(c) = t.s_next;
  terminal_[c] = t.terminal ? 1.0 : 0.0;
  seq_[cursor_] = pushed_++;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Batch ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (n == 0 || n > size_)
    fail(ErrorCategory::kState, "cannot sample " + std::to_string(n) + " transitions from a buffer of " + std::to_string(size_));
  // Floyd's algorithm: n distinct slots, each subset equally likely.
  std::vector<std::size_t> slots;
  slots.reserve(n);
  for (std::size_t j = size_ - n; j < size_; ++j) {
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    slots.push_back(std::find(slots.begin(), slots.end(), t) == slots.end() ? t : j);
  }
  std::shuffle(slots.begin(), slots.end(), rng);

  const auto m = static_cast<Eigen::Index>(n);
  Batch b;
  b.s.resize(s_.rows(), m);
  b.a.resize(a_.rows(), m);
  b.r.resize(m);
  b.s_next.resize(s_next_.rows(), m);
  b.terminal.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto i = static_cast<Eigen::Index>(slots[static_cast<std::size_t>(k)]);
    b.s.col(k) = s_.col(i);
    b.a.col(k) = a_.col(i);
    b.r[k] = r_[i];
    b.s_next.col(k) = s_next_.col(i);
    b.terminal[k] = terminal_[i];
  }
  b.slots = std::move(slots);
  return b;
}

}  // namespace voltreg
