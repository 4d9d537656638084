#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "nn.hpp"
#include "tensor.hpp"

namespace fedsab {

enum class AttackKind { None, Sab, BadNets, Dba };

AttackKind attack_kind_from_string(const std::string& s);
std::string attack_kind_to_string(AttackKind k);

struct AttackConfig {
  AttackKind kind = AttackKind::None;
  int target_class = 0;
  int start = 0;     // first attack round
  int duration = 0;  // number of attack rounds
  double poison_lr = 0.02;
  double poison_decay = 0.005;
  double top_fraction = 0.05;   // bottom-95% masking zeroes this share
  double drop_fraction = 0.20;  // sparse-update zeroes this share
  double poison_fraction = 0.5;
  bool mask_bottom95 = true;   // SAB defaults; baselines run with both off
  bool mask_sparse = true;
  bool mask_global = false;    // flat vector across tensors instead of per tensor
  bool mask_at_upload = false; // apply the bottom-95% mask once to the delta
  int num_adversaries = 1;
  // local epochs for the adversary's own training loop; 0 inherits the benign
  // client epoch count (the attacker controls its own compute)
  int adversary_epochs = 0;
  // size of the attacker's own data slice backing its poisoned dataset; the
  // poisoned dataset is an input of its own in the round protocol, separate
  // from the benign shards. 0 falls back to the adversary's shard.
  int data_count = 400;
};

// Zeroed-coordinate counts per tensor, aligned with ParamSet order.
struct MaskReport {
  std::vector<int64_t> zeroed_top;
  std::vector<int64_t> zeroed_sparse;
  int64_t total_top() const;
  int64_t total_sparse() const;
  void merge(const MaskReport& o);
};

// Mean gradient over the batch; the adversary's Eq-style poisoned gradient is
// the same primitive as the benign one, only the data differs.
ParamSet poisoned_gradient(const Architecture& arch, const ParamSet& params, const Tensor& batch,
                           const std::vector<int>& labels, double* loss_out = nullptr);

// Per tensor (or across the flattened set when global_flat), the
// ceil(top_fraction * size) coordinates of largest absolute value become 0;
// ties break toward the lower flat index.
ParamSet bottom95_mask(const ParamSet& grads, double top_fraction, MaskReport* report = nullptr,
                       bool global_flat = false);

// Per tensor, exactly floor(drop_fraction * size) uniformly chosen
// coordinates become 0, deterministically in the seed.
ParamSet sparse_update_mask(const ParamSet& delta, double drop_fraction, uint64_t seed,
                            MaskReport* report = nullptr);

// Exact k for ceil(f*n) / floor(f*n) with a guard against double roundoff
// (0.05*20 must give 1, not 2).
int64_t ceil_count(double fraction, int64_t n);
int64_t floor_count(double fraction, int64_t n);

struct AdversaryUpdate {
  ParamSet delta;
  MaskReport report;
  bool applied_bottom95 = false;
  bool applied_sparse = false;
  int64_t sample_count = 0;
};

// Local poisoned training: epochs of mini-batch SGD from the global params on
// the (already poisoned) local dataset, masking per the config. Order is
// fixed: the bottom-95% mask hits every per-step gradient during training,
// sparse-update hits the delta once at upload.
AdversaryUpdate adversary_local_train(const Architecture& arch, const ParamSet& global_params,
                                      const Dataset& local_poisoned, const AttackConfig& cfg,
                                      double effective_lr, int local_epochs, int batch_size,
                                      uint64_t shuffle_seed, uint64_t sparse_seed);

// With a adversaries, adversary j carries part (j + round) mod 4, so all four
// parts appear over any 4 consecutive attack rounds even when a = 1.
int dba_part_for(int adversary_ordinal, int round);

}  // namespace fedsab
