#include "harq_aoi/state_space.hpp"

#include <bit>
#include <limits>
#include <string>

#include "harq_aoi/errors.hpp"

namespace harq_aoi {

StateCodec::StateCodec(const SystemConfig& cfg)
    : cap_(cfg.aoi_cap), max_attempts_(cfg.max_attempts), num_sources_(cfg.num_sources()) {
  const auto c = static_cast<std::uint64_t>(cap_ + 1);
  radix_ = c * c * c * static_cast<std::uint64_t>(max_attempts_ + 1);
  std::uint64_t w = 1;
  for (int k = 0; k < num_sources_; ++k) {
    weights_.push_back(w);
    if (k + 1 < num_sources_) {
      if (w > std::numeric_limits<std::uint64_t>::max() / radix_)
        throw ResourceError("state encoding overflows 64 bits for " + std::to_string(num_sources_) +
                            " sources with aoi_cap " + std::to_string(cap_));
      w *= radix_;
    }
  }
}

std::uint64_t StateCodec::encode_source(const SourceState& s) const {
  const auto c = static_cast<std::uint64_t>(cap_ + 1);
  const auto x = static_cast<std::uint64_t>(max_attempts_ + 1);
  return ((static_cast<std::uint64_t>(s.fresh_age) * c + static_cast<std::uint64_t>(s.proc_age)) * c +
          static_cast<std::uint64_t>(s.aoi)) *
             x +
         static_cast<std::uint64_t>(s.attempts);
}

std::uint64_t StateCodec::encode(const SystemState& s) const {
  std::uint64_t code = 0;
  for (int k = 0; k < num_sources_; ++k)
    code += encode_source(s.sources[static_cast<std::size_t>(k)]) * weights_[static_cast<std::size_t>(k)];
  return code;
}

SystemState StateCodec::decode(std::uint64_t code) const {
  const auto c = static_cast<std::uint64_t>(cap_ + 1);
  const auto x = static_cast<std::uint64_t>(max_attempts_ + 1);
  SystemState s;
  s.sources.resize(static_cast<std::size_t>(num_sources_));
  for (int k = 0; k < num_sources_; ++k) {
    auto digit = code % radix_;
    code /= radix_;
    auto& src = s.sources[static_cast<std::size_t>(k)];
    src.attempts = static_cast<int>(digit % x);
    digit /= x;
    src.aoi = static_cast<int>(digit % c);
    digit /= c;
    src.proc_age = static_cast<int>(digit % c);
    src.fresh_age = static_cast<int>(digit / c);
  }
  return s;
}

StateSpace StateSpace::enumerate(const SystemConfig& cfg, std::size_t max_states) {
  cfg.validate();
  StateSpace space(cfg);
  const int K = cfg.num_sources();
  const auto& codec = space.codec_;
  auto& table = space.table_;

  std::unordered_map<std::uint64_t, std::uint16_t> prob_ids;
  auto intern = [&](double p) {
    const auto bits = std::bit_cast<std::uint64_t>(p);
    auto [it, inserted] = prob_ids.try_emplace(bits, static_cast<std::uint16_t>(table.prob_values.size()));
    if (inserted) {
      if (table.prob_values.size() >= std::numeric_limits<std::uint16_t>::max())
        throw ResourceError("too many distinct transition probabilities");
      table.prob_values.push_back(p);
    }
    return it->second;
  };

  auto lookup_or_insert = [&](std::uint64_t code) {
    auto [it, inserted] = space.index_.try_emplace(code, static_cast<std::int32_t>(space.codes_.size()));
    if (inserted) {
      if (space.codes_.size() >= max_states)
        throw ResourceError("state space exceeds max_states = " + std::to_string(max_states) + " (reached " +
                            std::to_string(space.codes_.size()) + " states)");
      space.codes_.push_back(code);
    }
    return it->second;
  };

  lookup_or_insert(codec.encode(SystemState::initial(cfg)));
  table.state_begin.push_back(0);
  table.pair_begin.push_back(0);

  std::vector<SourceBranches> untouched(static_cast<std::size_t>(K));
  std::vector<std::pair<std::uint64_t, double>> product, expanded;

  for (std::size_t i = 0; i < space.codes_.size(); ++i) {
    const SystemState s = codec.decode(space.codes_[i]);
    space.aoi_.push_back(harq_aoi::avg_aoi(s));
    for (int k = 0; k < K; ++k)
      untouched[static_cast<std::size_t>(k)] =
          source_branches(s.sources[static_cast<std::size_t>(k)], SourceRole::untouched, cfg.arrival_prob(k), cfg);

    for (int a = 0; a < num_action_codes(K); ++a) {
      const Action action = action_from_code(a, K);
      if (!is_feasible(s, action, cfg)) continue;

      product.assign(1, {0, 1.0});
      for (int k = 0; k < K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        SourceBranches targeted;
        const SourceBranches* branches = &untouched[ks];
        if (action.targets(k)) {
          targeted = source_branches(s.sources[ks],
                                     action.kind == ActionKind::fresh ? SourceRole::fresh : SourceRole::retransmit,
                                     cfg.arrival_prob(k), cfg);
          branches = &targeted;
        }
        expanded.clear();
        for (const auto& [code, p] : product)
          for (const auto& [src, q] : *branches)
            expanded.emplace_back(code + codec.encode_source(src) * codec.weight(k), p * q);
        product.swap(expanded);
      }

      table.pair_action.push_back(static_cast<std::uint16_t>(a));
      for (const auto& [code, p] : product) {
        table.succ_target.push_back(lookup_or_insert(code));
        table.succ_prob.push_back(intern(p));
      }
      table.pair_begin.push_back(static_cast<std::uint32_t>(table.succ_target.size()));
    }
    table.state_begin.push_back(static_cast<std::uint32_t>(table.pair_action.size()));
  }
  return space;
}

std::optional<std::size_t> StateSpace::index_of_code(std::uint64_t code) const {
  auto it = index_.find(code);
  if (it == index_.end()) return std::nullopt;
  return static_cast<std::size_t>(it->second);
}

std::optional<std::size_t> StateSpace::index_of(const SystemState& s) const {
  if (s.num_sources() != cfg_.num_sources()) return std::nullopt;
  for (const auto& src : s.sources) {
    if (src.fresh_age < 0 || src.proc_age < 0 || src.aoi < 0 || src.attempts < 0) return std::nullopt;
    if (src.fresh_age > cfg_.aoi_cap || src.proc_age > cfg_.aoi_cap || src.aoi > cfg_.aoi_cap ||
        src.attempts > cfg_.max_attempts)
      return std::nullopt;
  }
  return index_of_code(codec_.encode(s));
}

std::optional<std::size_t> StateSpace::pair_index(std::size_t state, int action_code) const {
  for (auto p = table_.state_begin[state]; p < table_.state_begin[state + 1]; ++p)
    if (table_.pair_action[p] == action_code) return p;
  return std::nullopt;
}

}  // namespace harq_aoi
