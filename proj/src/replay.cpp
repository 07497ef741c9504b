#include "marl/replay.hpp"

#include <stdexcept>

namespace marl {

void ReplayBuffer::store(Episode ep) {
  if (ep.length < 1) throw std::invalid_argument("ReplayBuffer::store: empty episode");
  if (ep.length > e_max_)
    throw std::invalid_argument("ReplayBuffer::store: episode longer than e_max");
  if (static_cast<int>(ep.states.size()) != ep.length + 1 ||
      static_cast<int>(ep.actions.size()) != ep.length ||
      static_cast<int>(ep.rewards.size()) != ep.length)
    throw std::invalid_argument("ReplayBuffer::store: inconsistent episode arrays");
  episodes_.push_back(std::move(ep));
  while (static_cast<int>(episodes_.size()) > capacity_) episodes_.pop_front();  // FIFO
}

std::vector<const Episode*> ReplayBuffer::sample(int batch, Rng& rng) const {
  const int n = size();
  if (batch < 1 || batch > n)
    throw std::invalid_argument("ReplayBuffer::sample: batch larger than buffer");
  // partial Fisher-Yates over episode indices
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::vector<const Episode*> out;
  out.reserve(batch);
  for (int i = 0; i < batch; ++i) {
    int j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
    out.push_back(&episodes_[idx[i]]);
  }
  return out;
}

}  // namespace marl
