#include "attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rng.hpp"
#include "util.hpp"

namespace fedsab {

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "none") return AttackKind::None;
  if (s == "sab") return AttackKind::Sab;
  if (s == "badnets") return AttackKind::BadNets;
  if (s == "dba") return AttackKind::Dba;
  fail(ErrorKind::Config, "unknown attack kind: " + s);
  return AttackKind::None;
}

std::string attack_kind_to_string(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "none";
    case AttackKind::Sab: return "sab";
    case AttackKind::BadNets: return "badnets";
    case AttackKind::Dba: return "dba";
  }
  return "none";
}

int64_t MaskReport::total_top() const {
  return std::accumulate(zeroed_top.begin(), zeroed_top.end(), int64_t{0});
}

int64_t MaskReport::total_sparse() const {
  return std::accumulate(zeroed_sparse.begin(), zeroed_sparse.end(), int64_t{0});
}

void MaskReport::merge(const MaskReport& o) {
  auto grow = [](std::vector<int64_t>& dst, const std::vector<int64_t>& src) {
    if (dst.size() < src.size()) dst.resize(src.size(), 0);
    for (size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  };
  grow(zeroed_top, o.zeroed_top);
  grow(zeroed_sparse, o.zeroed_sparse);
}

int64_t ceil_count(double fraction, int64_t n) {
  const double raw = fraction * static_cast<double>(n);
  const double guard = 1e-9 * std::max(1.0, std::abs(raw));
  int64_t k = static_cast<int64_t>(std::ceil(raw - guard));
  return std::clamp<int64_t>(k, 0, n);
}

int64_t floor_count(double fraction, int64_t n) {
  const double raw = fraction * static_cast<double>(n);
  const double guard = 1e-9 * std::max(1.0, std::abs(raw));
  int64_t k = static_cast<int64_t>(std::floor(raw + guard));
  return std::clamp<int64_t>(k, 0, n);
}

ParamSet poisoned_gradient(const Architecture& arch, const ParamSet& params, const Tensor& batch,
                           const std::vector<int>& labels, double* loss_out) {
  check(batch.rank() == 4 && batch.dim(0) >= 1, ErrorKind::Input, "poisoned_gradient: empty batch");
  return compute_gradients(arch, params, batch, labels, loss_out);
}

namespace {

// zeroes the k largest-|.| coordinates, ties to the lower index
void zero_top_k(std::vector<std::pair<scalar_t*, int64_t>>& coords, int64_t k) {
  if (k <= 0) return;
  auto cmp = [](const auto& a, const auto& b) {
    const double av = std::abs(*a.first), bv = std::abs(*b.first);
    if (av != bv) return av > bv;
    return a.second < b.second;
  };
  if (k < static_cast<int64_t>(coords.size()))
    std::nth_element(coords.begin(), coords.begin() + (k - 1), coords.end(), cmp);
  for (int64_t i = 0; i < k; ++i) *coords[static_cast<size_t>(i)].first = 0.0;
}

}  // namespace

ParamSet bottom95_mask(const ParamSet& grads, double top_fraction, MaskReport* report,
                       bool global_flat) {
  check(top_fraction >= 0.0 && top_fraction < 1.0, ErrorKind::Input,
        "bottom95_mask: top_fraction must lie in [0,1)");
  ParamSet out;
  for (size_t i = 0; i < grads.size(); ++i) out.add(grads.name_at(i), grads.tensor_at(i));

  MaskReport rep;
  rep.zeroed_top.assign(grads.size(), 0);
  if (global_flat) {
    std::vector<std::pair<scalar_t*, int64_t>> coords;
    coords.reserve(static_cast<size_t>(out.total_values()));
    int64_t flat = 0;
    for (size_t t = 0; t < out.size(); ++t) {
      Tensor& ten = out.tensor_at(t);
      for (int64_t j = 0; j < ten.size(); ++j) coords.push_back({&ten[j], flat++});
    }
    const int64_t k = ceil_count(top_fraction, static_cast<int64_t>(coords.size()));
    // remember tensor boundaries to recover per-tensor counts
    std::vector<int64_t> bounds(out.size() + 1, 0);
    for (size_t t = 0; t < out.size(); ++t) bounds[t + 1] = bounds[t] + out.tensor_at(t).size();
    zero_top_k(coords, k);
    for (int64_t c = 0; c < k; ++c) {
      const int64_t flat_idx = coords[static_cast<size_t>(c)].second;
      const auto it = std::upper_bound(bounds.begin(), bounds.end(), flat_idx);
      ++rep.zeroed_top[static_cast<size_t>(it - bounds.begin()) - 1];
    }
  } else {
    for (size_t t = 0; t < out.size(); ++t) {
      Tensor& ten = out.tensor_at(t);
      const int64_t k = ceil_count(top_fraction, ten.size());
      std::vector<std::pair<scalar_t*, int64_t>> coords;
      coords.reserve(static_cast<size_t>(ten.size()));
      for (int64_t j = 0; j < ten.size(); ++j) coords.push_back({&ten[j], j});
      zero_top_k(coords, k);
      rep.zeroed_top[t] = k;
    }
  }
  if (report) report->merge(rep);
  return out;
}

ParamSet sparse_update_mask(const ParamSet& delta, double drop_fraction, uint64_t seed,
                            MaskReport* report) {
  check(drop_fraction >= 0.0 && drop_fraction < 1.0, ErrorKind::Input,
        "sparse_update_mask: drop_fraction must lie in [0,1)");
  ParamSet out;
  for (size_t i = 0; i < delta.size(); ++i) out.add(delta.name_at(i), delta.tensor_at(i));

  MaskReport rep;
  rep.zeroed_sparse.assign(delta.size(), 0);
  Rng rng(stream_seed(seed, 0, 0, Stream::SparseMask));
  for (size_t t = 0; t < out.size(); ++t) {
    Tensor& ten = out.tensor_at(t);
    const int64_t k = floor_count(drop_fraction, ten.size());
    if (k > 0) {
      const std::vector<int> picks =
          rng.sample_without_replacement(static_cast<int>(ten.size()), static_cast<int>(k));
      for (int idx : picks) ten[idx] = 0.0;
    }
    rep.zeroed_sparse[t] = k;
  }
  if (report) report->merge(rep);
  return out;
}

AdversaryUpdate adversary_local_train(const Architecture& arch, const ParamSet& global_params,
                                      const Dataset& local_poisoned, const AttackConfig& cfg,
                                      double effective_lr, int local_epochs, int batch_size,
                                      uint64_t shuffle_seed, uint64_t sparse_seed) {
  check(cfg.kind != AttackKind::None, ErrorKind::Config,
        "adversary_local_train: attack kind is none");
  check(!local_poisoned.empty(), ErrorKind::Input, "adversary_local_train: empty local data");
  check(local_epochs >= 1 && batch_size >= 1, ErrorKind::Config,
        "adversary_local_train: epochs and batch size must be >= 1");

  ParamSet local;
  for (size_t i = 0; i < global_params.size(); ++i)
    local.add(global_params.name_at(i), global_params.tensor_at(i));

  AdversaryUpdate out;
  out.sample_count = static_cast<int64_t>(local_poisoned.size());

  Rng rng(shuffle_seed);
  const int n = static_cast<int>(local_poisoned.size());
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  bool reported_step_mask = false;
  for (int epoch = 0; epoch < local_epochs; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch_size) {
      const int bs = std::min(batch_size, n - start);
      std::vector<const Tensor*> imgs;
      std::vector<int> labels;
      for (int k = 0; k < bs; ++k) {
        const auto& ex =
            local_poisoned.examples[static_cast<size_t>(order[static_cast<size_t>(start + k)])];
        imgs.push_back(&ex.pixels);
        labels.push_back(ex.label);
      }
      ParamSet grads = poisoned_gradient(arch, local, stack_batch(imgs), labels);
      if (cfg.mask_bottom95 && !cfg.mask_at_upload) {
        // masked coordinates receive no update during the attack; per-tensor
        // counts are identical every step, so report the first one only
        grads = bottom95_mask(grads, cfg.top_fraction, reported_step_mask ? nullptr : &out.report,
                              cfg.mask_global);
        reported_step_mask = true;
        out.applied_bottom95 = true;
      }
      sgd_update(local, grads, effective_lr);
    }
  }

  out.delta = param_diff(local, global_params);
  if (cfg.mask_bottom95 && cfg.mask_at_upload) {
    out.delta = bottom95_mask(out.delta, cfg.top_fraction, &out.report, cfg.mask_global);
    out.applied_bottom95 = true;
  }
  if (cfg.mask_sparse) {
    out.delta = sparse_update_mask(out.delta, cfg.drop_fraction, sparse_seed, &out.report);
    out.applied_sparse = true;
  }
  return out;
}

int dba_part_for(int adversary_ordinal, int round) {
  check(adversary_ordinal >= 0 && round >= 0, ErrorKind::Input, "dba_part_for: negative inputs");
  return (adversary_ordinal + round) % 4;
}

}  // namespace fedsab
