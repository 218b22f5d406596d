#ifndef TRANSNET_TRAINER_HPP
#define TRANSNET_TRAINER_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "transnet/datamodel.hpp"
#include "transnet/losses.hpp"
#include "transnet/metrics.hpp"
#include "transnet/networks.hpp"
#include "transnet/rng.hpp"

namespace transnet {

// Per-tensor first/second moment accumulators plus the shared step counter.
class AdamOptimizer {
  public:
    AdamOptimizer(double alpha, double beta1, double beta2, double eps = 1e-8);

    void init(const ParametricNet& net);
    void step(ParametricNet& net, const ad::GradMap& grads);

    double alpha, beta1, beta2, eps;
    std::int64_t t = 0;
    std::vector<std::vector<double>> m, v;
};

struct RunResult {
    Scores best{};
    bool has_best = false;
    std::int64_t steps_done = 0;
    bool aborted_non_finite = false;
    std::string abort_reason;
};

// Alternating optimization: n_critic critic updates per generator update.
// Real and pseudo triplets come from the labeled source pool, fake triplets
// from target images under the current segmentation network; the generator
// additionally sees the few-shot target labels and the equivariance loss on
// unlabeled target images.
class Trainer {
  public:
    Trainer(TrainingConfig cfg, SourceDataset source, TargetDataset target);

    // One Adam update per active critic; the segmentation parameters are
    // not part of the recorded graph here.
    LossReport critic_step();
    // One Adam update of the segmentation network only.
    LossReport generator_step();

    // Runs the configured step budget (each outer step = n_critic critic
    // steps + 1 generator step). Logs one JSON line per outer step and eval
    // lines at eval_every; writes last.ckpt / best.ckpt into checkpoint_dir
    // when given. Non-finite losses stop the run with the reason recorded.
    RunResult train(std::ostream* log = nullptr, const std::string& checkpoint_dir = {});

    Scores evaluate() const;
    Mask predict(const Image& x) const { return net_->segment(x); }
    size_t eval_count() const { return target_.evaluation_samples().size(); }

    std::int64_t step() const { return step_; }
    const TrainingConfig& config() const { return cfg_; }
    const SegmentationNetwork& network() const { return *net_; }
    const BoundaryCritic* outer_critic() const { return outer_.get(); }
    const BoundaryCritic* inner_critic() const { return inner_.get(); }
    bool single_critic() const { return single_; }

    std::uint64_t net_param_hash() const { return net_->param_hash(); }
    std::uint64_t outer_param_hash() const { return outer_ ? outer_->param_hash() : 0; }
    std::uint64_t inner_param_hash() const { return inner_ ? inner_->param_hash() : 0; }

    void save_checkpoint(const std::string& path) const;
    static Trainer load_checkpoint(const std::string& path, SourceDataset source,
                                   TargetDataset target);

    Rng& rng() { return rng_; }

    // Checkpoint contents without datasets: enough to run inference.
    struct LoadedNetwork {
        TrainingConfig cfg;
        std::int64_t step = 0;
        std::unique_ptr<SegmentationNetwork> net;
    };
    static LoadedNetwork load_network(const std::string& checkpoint_path);

  private:
    void check_finite(const LossReport& r, const char* where) const;
    const Image& sample_target_image();
    const LabeledSample& sample_source();

    TrainingConfig cfg_;
    SourceDataset source_;
    TargetDataset target_;
    bool single_ = false;
    std::unique_ptr<SegmentationNetwork> net_;
    std::unique_ptr<BoundaryCritic> outer_, inner_;
    std::unique_ptr<AdamOptimizer> opt_net_, opt_outer_, opt_inner_;
    Rng rng_;
    std::int64_t step_ = 0;
    size_t labeled_size_at_init_ = 0;
};

}  // namespace transnet

#endif
