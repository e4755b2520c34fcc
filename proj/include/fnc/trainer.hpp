#pragma once

// One training context: main encoder, optimizer state, optional momentum
// encoder and memory bank. Exactly one caller mutates it per step.

#include <optional>
#include <vector>

#include "fnc/batch.hpp"
#include "fnc/config.hpp"
#include "fnc/data.hpp"
#include "fnc/fn_detect.hpp"
#include "fnc/losses.hpp"
#include "fnc/model.hpp"

namespace fnc {

struct StepOutput {
  double loss = 0.0;
  FalseNegativeSets fns;                  // sets the loss used (empty for baseline)
  std::vector<std::uint64_t> pool_seqs;   // bank sequence numbers, memory-bank pool only
};

class Trainer {
 public:
  explicit Trainer(const FncConfig& cfg)
      : Trainer(cfg, init_params(cfg.layer_sizes(), cfg.seed)) {}

  Trainer(const FncConfig& cfg, MlpParams init) : cfg_(cfg), params_(std::move(init)) {
    validate_config(cfg_);
    require(params_.input_dim() == cfg_.input_dim && params_.output_dim() == cfg_.embed_dim,
            ErrorKind::config, "initial parameters do not match the configured encoder");
    opt_.lr = cfg_.lr;
    opt_.mu = cfg_.optimizer_momentum;
    if (cfg_.uses_momentum_encoder()) momentum_ = MomentumEncoder{params_, cfg_.momentum};
    if (cfg_.uses_bank()) bank_.emplace(cfg_.bank_capacity);
  }

  const FncConfig& config() const { return cfg_; }
  const MlpParams& params() const { return params_; }
  const std::optional<MomentumEncoder>& momentum_encoder() const { return momentum_; }
  const std::optional<MemoryBank>& bank() const { return bank_; }
  std::uint64_t steps() const { return steps_; }

  /// Bank contents the next step will see as candidates.
  BankSnapshot bank_snapshot() const { return bank_ ? bank_->snapshot() : BankSnapshot{}; }

  /// `oracle`, when given, replaces detection with ground-truth sets in the
  /// index space of the configured candidate pool.
  StepOutput step(const RawBatch& raw, const FalseNegativeSets* oracle = nullptr) {
    const std::size_t views = raw.main_views.size();
    require(views >= 2 && views % 2 == 0, ErrorKind::empty_batch, "step needs 2N main views");
    require(raw.support_groups.size() == raw.num_images(), ErrorKind::shape,
            "support grouping does not cover every image");

    StepOutput out;
    ForwardResult main = forward(params_, raw.main_views);
    EmbeddingBatch emb;
    emb.views = main.embeddings;
    emb.pairing = raw.pairing;

    // Keys for the bank come from the momentum encoder before this step's update.
    std::vector<Vec> keys;
    if (bank_) {
      std::vector<Vec> second;
      for (std::size_t n = 0; n < raw.num_images(); ++n) second.push_back(raw.main_views[2 * n + 1]);
      keys = encode(momentum_->params, second);
    }

    BankSnapshot snap;
    if (bank_) {
      snap = bank_->snapshot();
      emb.pool = snap.embeddings;
    }

    const std::size_t s = raw.support_size();
    const bool multicrop = cfg_.strategy == Strategy::attract_multicrop;
    const bool detect = cfg_.detects() && oracle == nullptr;
    const bool support_from_momentum = cfg_.support_source == SupportSource::momentum && momentum_;

    SupportSet support = SupportSet::none(views);
    std::optional<ForwardResult> support_fwd;
    if (s > 0 && (detect || multicrop)) {
      support.source = support_from_momentum ? SupportSource::momentum : SupportSource::main;
      if (support_from_momentum) {
        support.views = encode(momentum_->params, raw.support_views);
      } else {
        support_fwd = forward(params_, raw.support_views);
        support.views = support_fwd->embeddings;
      }
      for (std::size_t i = 0; i < views; ++i) support.members[i] = raw.support_groups[i / 2];
    }

    const CandidatePool pool = cfg_.candidate_pool;
    FalseNegativeSets fns = FalseNegativeSets::empty(views, pool);
    if (oracle != nullptr) {
      require(cfg_.detects(), ErrorKind::config, "oracle sets given to a baseline run");
      require(oracle->pool == pool, ErrorKind::invalid_set, "oracle sets use the wrong candidate pool");
      fns = *oracle;
    } else if (detect) {
      const SupportSet& scoring = s > 0 ? support : anchor_as_support(emb);
      fns = detect_false_negatives(emb, scoring, pool, cfg_.rule(), cfg_.aggregation);
    }

    LossResult loss;
    switch (cfg_.strategy) {
      case Strategy::baseline: loss = info_nce(emb, cfg_.tau); break;
      case Strategy::eliminate: loss = elimination_loss(emb, fns, cfg_.tau); break;
      case Strategy::attract: loss = attraction_loss(emb, fns, cfg_.tau); break;
      case Strategy::attract_multicrop:
        loss = multicrop_attraction_loss(emb, support, fns, cfg_.tau);
        break;
    }
    require(std::isfinite(loss.loss), ErrorKind::invariant, "non-finite loss");

    MlpParams grad = backward(params_, main.cache, loss.grads);
    if (support_fwd && !loss.support_grads.empty())
      axpy(grad, backward(params_, support_fwd->cache, loss.support_grads), 1.0);
    opt_.step(params_, grad);

    if (momentum_) *momentum_ = momentum_update(std::move(*momentum_), params_);
    if (bank_) bank_->enqueue(keys);
    ++steps_;

    out.loss = loss.loss;
    out.fns = std::move(fns);
    out.pool_seqs = std::move(snap.seqs);
    return out;
  }

 private:
  FncConfig cfg_;
  MlpParams params_;
  SgdMomentum opt_;
  std::optional<MomentumEncoder> momentum_;
  std::optional<MemoryBank> bank_;
  std::uint64_t steps_ = 0;
};

}  // namespace fnc
