#include "transnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "transnet/transforms.hpp"
#include "transnet/triplets.hpp"

namespace transnet {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(double alpha_, double beta1_, double beta2_, double eps_)
    : alpha(alpha_), beta1(beta1_), beta2(beta2_), eps(eps_) {}

void AdamOptimizer::init(const ParametricNet& net) {
    t = 0;
    m.clear();
    v.clear();
    for (const ad::Value& p : net.params()) {
        m.emplace_back(p->value.data.size(), 0.0);
        v.emplace_back(p->value.data.size(), 0.0);
    }
}

void AdamOptimizer::step(ParametricNet& net, const ad::GradMap& grads) {
    if (m.size() != net.params().size())
        throw std::logic_error("AdamOptimizer: not initialized for this network");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < net.params().size(); ++i) {
        ad::Value p = net.params()[i];
        ad::Value g = grads.at(p);
        const std::vector<double>& gd = g->value.data;
        std::vector<double>& pd = p->value.data;
        if (gd.size() != pd.size())
            throw std::logic_error("AdamOptimizer: gradient/parameter size mismatch");
        for (size_t j = 0; j < pd.size(); ++j) {
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * gd[j];
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * gd[j] * gd[j];
            pd[j] -= alpha * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Batch helpers
// ---------------------------------------------------------------------------

namespace {

Tensor stack_batch(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_batch: empty");
    const Shape& s0 = rows[0].shape;
    Tensor out(Shape(int(rows.size()), s0.c, s0.h, s0.w));
    const std::int64_t stride = std::int64_t(s0.c) * s0.h * s0.w;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (!(rows[i].shape == s0)) throw std::invalid_argument("stack_batch: ragged rows");
        std::copy(rows[i].data.begin(), rows[i].data.end(),
                  out.data.begin() + std::int64_t(i) * stride);
    }
    return out;
}

Tensor concat_c(const Tensor& a, const Tensor& b) {
    ad::NoGradGuard ng;
    return ad::concat_channels({ad::constant(a), ad::constant(b)})->value;
}

Tensor batch_row(const Tensor& batch, int n) {
    const Shape& s = batch.shape;
    Tensor out(Shape(1, s.c, s.h, s.w));
    const std::int64_t stride = std::int64_t(s.c) * s.h * s.w;
    std::copy(batch.data.begin() + n * stride, batch.data.begin() + (n + 1) * stride,
              out.data.begin());
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(TrainingConfig cfg, SourceDataset source, TargetDataset target)
    : cfg_(std::move(cfg)), source_(std::move(source)), target_(std::move(target)),
      rng_(0) {
    cfg_.finalize();
    rng_ = Rng(cfg_.seed);

    // Category disjointness (only meaningful when both sides carry metadata).
    for (const std::string& c : source_.categories()) {
        if (c != "default" && !c.empty() && target_.categories.count(c))
            throw std::invalid_argument("source and target share category '" + c + "'");
    }
    if (int(target_.labeled.size()) > cfg_.labeled_budget)
        throw std::invalid_argument("target labeled pool exceeds the configured budget");
    labeled_size_at_init_ = target_.labeled.size();

    auto check_size = [&](const Tensor& t, const char* what) {
        if (t.shape.h != cfg_.image_size || t.shape.w != cfg_.image_size)
            throw std::invalid_argument(std::string(what) + ": resolution mismatch with config");
    };
    for (const auto& s : source_.samples) check_size(s.image.data, "source sample");
    for (const auto& s : target_.labeled) check_size(s.image.data, "target sample");
    for (const auto& x : target_.unlabeled) check_size(x.data, "target image");
    for (const auto& s : target_.evaluation_samples()) check_size(s.image.data, "eval sample");

    const int img_c = 3;
    const int trip_c = 2 * img_c + 1;
    single_ = cfg_.has_ablation("single_discriminator");

    net_ = std::make_unique<SegmentationNetwork>(img_c, cfg_.net_base_width, cfg_.net_levels,
                                                 rng_);
    if (single_) {
        outer_ = std::make_unique<BoundaryCritic>(2 * trip_c, cfg_.critic_base_width,
                                                  cfg_.critic_blocks, rng_);
    } else {
        if (!cfg_.has_ablation("no_outer"))
            outer_ = std::make_unique<BoundaryCritic>(trip_c, cfg_.critic_base_width,
                                                      cfg_.critic_blocks, rng_);
        if (!cfg_.has_ablation("no_inner"))
            inner_ = std::make_unique<BoundaryCritic>(trip_c, cfg_.critic_base_width,
                                                      cfg_.critic_blocks, rng_);
    }

    opt_net_ = std::make_unique<AdamOptimizer>(cfg_.adam_alpha, cfg_.adam_beta1, cfg_.adam_beta2);
    opt_net_->init(*net_);
    if (outer_) {
        opt_outer_ =
            std::make_unique<AdamOptimizer>(cfg_.adam_alpha, cfg_.adam_beta1, cfg_.adam_beta2);
        opt_outer_->init(*outer_);
    }
    if (inner_) {
        opt_inner_ =
            std::make_unique<AdamOptimizer>(cfg_.adam_alpha, cfg_.adam_beta1, cfg_.adam_beta2);
        opt_inner_->init(*inner_);
    }
}

void Trainer::check_finite(const LossReport& r, const char* where) const {
    if (!r.all_finite())
        throw NonFiniteError(std::string("non-finite loss in ") + where + " at step " +
                             std::to_string(step_) + ": " + r.json_line(step_));
}

const Image& Trainer::sample_target_image() {
    size_t n_lab = target_.labeled.size(), n_unl = target_.unlabeled.size();
    if (n_lab + n_unl == 0) throw std::invalid_argument("target dataset has no images");
    size_t i = size_t(rng_.uniform_int(0, int(n_lab + n_unl) - 1));
    return i < n_lab ? target_.labeled[i].image : target_.unlabeled[i - n_lab];
}

const LabeledSample& Trainer::sample_source() {
    if (source_.samples.empty()) throw std::invalid_argument("source dataset is empty");
    return source_.samples[size_t(rng_.uniform_int(0, int(source_.samples.size()) - 1))];
}

LossReport Trainer::critic_step() {
    LossReport rep;
    if (!outer_ && !inner_) return rep;

    const int K = cfg_.batch_size;
    const bool want_pseudo = !cfg_.has_ablation("no_pseudo");
    const PseudoInnerVariant variant = cfg_.pseudo_inner == "erode_complement"
                                           ? PseudoInnerVariant::ErodeComplement
                                           : PseudoInnerVariant::DilateComplement;

    std::vector<const Image*> tgt(K);
    std::vector<const LabeledSample*> src(K);
    std::vector<double> eps(K);
    std::vector<int> r_o(K), r_i(K);
    std::vector<Tensor> tgt_rows(K);
    for (int k = 0; k < K; ++k) {
        tgt[k] = &sample_target_image();
        src[k] = &sample_source();
        eps[k] = rng_.uniform();
        r_o[k] = rng_.uniform_int(cfg_.radius_min, cfg_.radius_max);
        r_i[k] = rng_.uniform_int(cfg_.radius_min, cfg_.radius_max);
        tgt_rows[k] = tgt[k]->data;
    }

    Tensor preds = net_->segment_batch(stack_batch(tgt_rows));
    if (!preds.all_finite())
        throw NonFiniteError("non-finite segmentation output in critic_step at step " +
                             std::to_string(step_));

    std::vector<Tensor> fo(K), po(K), ro(K), io(K);
    std::vector<Tensor> fi(K), pi(K), ri(K), ii(K);
    for (int k = 0; k < K; ++k) {
        Mask mpred(batch_row(preds, k), Hardness::Soft);
        Triplet f_o = fake_outer(*tgt[k], mpred);
        Triplet r_out = real_outer(src[k]->image, src[k]->mask);
        fo[k] = triplet_tensor(f_o);
        ro[k] = triplet_tensor(r_out);
        io[k] = triplet_tensor(interpolate(r_out, f_o, eps[k]));
        if (want_pseudo) po[k] = triplet_tensor(pseudo_outer(src[k]->image, src[k]->mask, r_o[k]));

        Triplet f_i = fake_inner(*tgt[k], mpred);
        Triplet r_in = real_inner(src[k]->image, src[k]->mask);
        fi[k] = triplet_tensor(f_i);
        ri[k] = triplet_tensor(r_in);
        ii[k] = triplet_tensor(interpolate(r_in, f_i, eps[k]));
        if (want_pseudo)
            pi[k] = triplet_tensor(pseudo_inner(src[k]->image, src[k]->mask, r_i[k], variant));
    }

    struct SideBatch {
        Tensor fake, pseudo, real, interp;
        bool has_pseudo = false;
    };
    auto make_side = [&](std::vector<Tensor>& f, std::vector<Tensor>& p, std::vector<Tensor>& r,
                         std::vector<Tensor>& i) {
        SideBatch b;
        b.fake = stack_batch(f);
        b.real = stack_batch(r);
        b.interp = stack_batch(i);
        if (want_pseudo) {
            b.pseudo = stack_batch(p);
            b.has_pseudo = true;
        }
        return b;
    };

    auto update_critic = [&](BoundaryCritic& critic, AdamOptimizer& opt, const SideBatch& b,
                             double& total_out, double& gp_out) {
        ad::Value sf = critic.forward(ad::constant(b.fake));
        ad::Value sp = b.has_pseudo ? critic.forward(ad::constant(b.pseudo)) : ad::Value();
        ad::Value sr = critic.forward(ad::constant(b.real));
        ad::Value gp = gradient_penalty(critic, b.interp, cfg_.lambda_gp);
        ad::Value loss = critic_loss(sf, sp, sr, gp);
        total_out = loss->value.item();
        gp_out = gp->value.item();
        if (!std::isfinite(total_out)) return;  // caller aborts before the update
        ad::GradMap g = ad::backward(loss);
        opt.step(critic, g);
    };

    if (single_) {
        SideBatch o = make_side(fo, po, ro, io);
        SideBatch i = make_side(fi, pi, ri, ii);
        SideBatch joint;
        joint.fake = concat_c(o.fake, i.fake);
        joint.real = concat_c(o.real, i.real);
        joint.interp = concat_c(o.interp, i.interp);
        if (want_pseudo) {
            joint.pseudo = concat_c(o.pseudo, i.pseudo);
            joint.has_pseudo = true;
        }
        update_critic(*outer_, *opt_outer_, joint, rep.critic_outer_total, rep.gp_outer);
    } else {
        if (outer_) {
            SideBatch o = make_side(fo, po, ro, io);
            update_critic(*outer_, *opt_outer_, o, rep.critic_outer_total, rep.gp_outer);
        }
        if (inner_) {
            SideBatch i = make_side(fi, pi, ri, ii);
            update_critic(*inner_, *opt_inner_, i, rep.critic_inner_total, rep.gp_inner);
        }
    }
    check_finite(rep, "critic_step");
    return rep;
}

LossReport Trainer::generator_step() {
    LossReport rep;
    if (target_.labeled.size() != labeled_size_at_init_)
        throw std::logic_error("few-shot labeled pool changed size during training");

    const int K = cfg_.batch_size;
    ad::Value rec, sel, s_out, s_in;

    if (!target_.labeled.empty()) {
        std::vector<Tensor> imgs(K), masks(K);
        for (int k = 0; k < K; ++k) {
            const LabeledSample& s =
                target_.labeled[size_t(rng_.uniform_int(0, int(target_.labeled.size()) - 1))];
            imgs[k] = s.image.data;
            masks[k] = s.mask.data;
        }
        rec = reconstruction_loss(net_->forward(ad::constant(stack_batch(imgs))),
                                  ad::constant(stack_batch(masks)));
        rep.rec = rec->value.item();
    } else if (cfg_.labeled_budget != 0) {
        throw std::invalid_argument("target has no labels but labeled_budget > 0");
    }

    std::vector<Tensor> unl(K);
    for (int k = 0; k < K; ++k) unl[k] = sample_target_image().data;
    Tensor xu = stack_batch(unl);
    ad::Value xu_c = ad::constant(xu);

    if (!cfg_.has_ablation("no_self_sup")) {
        std::vector<AffineTransform> transforms(K);
        std::vector<int> radii(K);
        for (int k = 0; k < K; ++k) {
            transforms[k] = sample_transform(rng_).A;
            radii[k] = rng_.uniform_int(cfg_.radius_min, cfg_.radius_max);
        }
        sel = self_supervised_loss(*net_, xu_c, transforms, radii);
        rep.self_sup = sel->value.item();
    }

    if (outer_ || inner_) {
        ad::Value m = net_->forward(xu_c);
        ad::Value t_outer = triplet_concat(xu_c, m);
        ad::Value m_comp = ad::sub(ad::constant(Tensor::full(m->shape(), 1.0)), m);
        ad::Value t_inner = triplet_concat(xu_c, m_comp);
        if (single_) {
            s_out = ad::mean_all(outer_->forward(ad::concat_channels({t_outer, t_inner})));
            rep.adv_outer = s_out->value.item();
        } else {
            if (outer_) {
                s_out = ad::mean_all(outer_->forward(t_outer));
                rep.adv_outer = s_out->value.item();
            }
            if (inner_) {
                s_in = ad::mean_all(inner_->forward(t_inner));
                rep.adv_inner = s_in->value.item();
            }
        }
    }

    ad::Value total = generator_loss(rec, sel, s_out, s_in, cfg_.tau, cfg_.eta);
    rep.gen_total = total->value.item();
    check_finite(rep, "generator_step");
    if (total->requires_grad) {
        ad::GradMap g = ad::backward(total);
        opt_net_->step(*net_, g);
    }
    return rep;
}

Scores Trainer::evaluate() const {
    const auto& eval = target_.evaluation_samples();
    if (eval.empty()) throw std::invalid_argument("evaluate: no evaluation samples");
    ConfusionMatrix cm;
    for (const LabeledSample& s : eval) accumulate(cm, net_->segment(s.image), s.mask);
    return scores(cm);
}

RunResult Trainer::train(std::ostream* log, const std::string& checkpoint_dir) {
    RunResult res;
    double best_miou = -1.0;
    int evals_since_best = 0;
    const bool has_eval = !target_.evaluation_samples().empty();

    auto save_to = [&](const char* name) {
        if (!checkpoint_dir.empty()) save_checkpoint(checkpoint_dir + "/" + name);
    };

    for (int s = 0; s < cfg_.steps; ++s) {
        LossReport merged;
        try {
            int nc = (outer_ || inner_) ? cfg_.n_critic : 0;
            for (int t = 0; t < nc; ++t) {
                LossReport cr = critic_step();
                merged.critic_outer_total += cr.critic_outer_total / nc;
                merged.critic_inner_total += cr.critic_inner_total / nc;
                merged.gp_outer += cr.gp_outer / nc;
                merged.gp_inner += cr.gp_inner / nc;
            }
            LossReport gr = generator_step();
            merged.rec = gr.rec;
            merged.self_sup = gr.self_sup;
            merged.adv_outer = gr.adv_outer;
            merged.adv_inner = gr.adv_inner;
            merged.gen_total = gr.gen_total;
        } catch (const NonFiniteError& e) {
            res.aborted_non_finite = true;
            res.abort_reason = e.what();
            save_to("last.ckpt");
            if (log) *log << "{\"step\":" << step_ << ",\"abort\":\"non_finite\"}\n";
            return res;
        }
        ++step_;
        res.steps_done = step_;
        if (log) *log << merged.json_line(step_) << "\n" << std::flush;

        if (has_eval && cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0) {
            Scores sc = evaluate();
            if (log)
                *log << "{\"step\":" << step_ << ",\"eval_miou\":" << sc.miou
                     << ",\"eval_pa\":" << sc.pa << "}\n"
                     << std::flush;
            if (sc.miou > best_miou) {
                best_miou = sc.miou;
                res.best = sc;
                res.has_best = true;
                evals_since_best = 0;
                save_to("best.ckpt");
            } else if (cfg_.early_stop_patience > 0 &&
                       ++evals_since_best >= cfg_.early_stop_patience) {
                break;
            }
        }
        if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) save_to("last.ckpt");
    }
    save_to("last.ckpt");
    if (!res.has_best && has_eval) {
        res.best = evaluate();
        res.has_best = true;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kMagic = 0x54504b434e415254ULL;  // "TRANCKPT"
constexpr std::uint32_t kVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), std::streamsize(s.size()));
}
void write_doubles(std::ostream& os, const std::vector<double>& d) {
    write_u64(os, d.size());
    os.write(reinterpret_cast<const char*>(d.data()), std::streamsize(d.size() * sizeof(double)));
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::runtime_error("checkpoint: truncated");
    return v;
}
std::int64_t read_i64(std::istream& is) {
    std::int64_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::runtime_error("checkpoint: truncated");
    return v;
}
std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::runtime_error("checkpoint: truncated");
    return v;
}
std::string read_str(std::istream& is) {
    std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    if (!is) throw std::runtime_error("checkpoint: truncated");
    return s;
}
std::vector<double> read_doubles(std::istream& is) {
    std::uint64_t n = read_u64(is);
    std::vector<double> d(n);
    is.read(reinterpret_cast<char*>(d.data()), std::streamsize(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated");
    return d;
}

void write_net(std::ostream& os, const ParametricNet& net, const AdamOptimizer& opt) {
    write_doubles(os, net.flat_params());
    write_i64(os, opt.t);
    std::vector<double> flat_m, flat_v;
    for (const auto& mi : opt.m) flat_m.insert(flat_m.end(), mi.begin(), mi.end());
    for (const auto& vi : opt.v) flat_v.insert(flat_v.end(), vi.begin(), vi.end());
    write_doubles(os, flat_m);
    write_doubles(os, flat_v);
}

void read_net(std::istream& is, ParametricNet& net, AdamOptimizer& opt) {
    std::vector<double> flat = read_doubles(is);
    if (std::int64_t(flat.size()) != net.param_count())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    net.set_flat_params(flat);
    opt.t = read_i64(is);
    std::vector<double> flat_m = read_doubles(is), flat_v = read_doubles(is);
    if (std::int64_t(flat_m.size()) != net.param_count() || flat_m.size() != flat_v.size())
        throw std::runtime_error("checkpoint: optimizer state size mismatch");
    size_t off = 0;
    for (size_t i = 0; i < opt.m.size(); ++i) {
        std::copy(flat_m.begin() + off, flat_m.begin() + off + opt.m[i].size(),
                  opt.m[i].begin());
        std::copy(flat_v.begin() + off, flat_v.begin() + off + opt.v[i].size(),
                  opt.v[i].begin());
        off += opt.m[i].size();
    }
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    write_u64(os, kMagic);
    write_u32(os, kVersion);
    write_str(os, cfg_.serialize());
    write_i64(os, step_);
    write_str(os, rng_.serialize());
    std::uint32_t flags =
        (outer_ ? 1u : 0u) | (inner_ ? 2u : 0u) | (single_ ? 4u : 0u);
    write_u32(os, flags);
    write_net(os, *net_, *opt_net_);
    if (outer_) write_net(os, *outer_, *opt_outer_);
    if (inner_) write_net(os, *inner_, *opt_inner_);
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Trainer Trainer::load_checkpoint(const std::string& path, SourceDataset source,
                                 TargetDataset target) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    if (read_u64(is) != kMagic) throw std::runtime_error("checkpoint: bad magic");
    if (read_u32(is) != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    TrainingConfig cfg = TrainingConfig::parse(read_str(is));
    std::int64_t step = read_i64(is);
    std::string rng_state = read_str(is);
    std::uint32_t flags = read_u32(is);

    Trainer t(cfg, std::move(source), std::move(target));
    std::uint32_t expect =
        (t.outer_ ? 1u : 0u) | (t.inner_ ? 2u : 0u) | (t.single_ ? 4u : 0u);
    if (flags != expect) throw std::runtime_error("checkpoint: architecture flag mismatch");
    read_net(is, *t.net_, *t.opt_net_);
    if (t.outer_) read_net(is, *t.outer_, *t.opt_outer_);
    if (t.inner_) read_net(is, *t.inner_, *t.opt_inner_);
    t.step_ = step;
    t.rng_.deserialize(rng_state);
    return t;
}

Trainer::LoadedNetwork Trainer::load_network(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    if (read_u64(is) != kMagic) throw std::runtime_error("checkpoint: bad magic");
    if (read_u32(is) != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    LoadedNetwork out;
    out.cfg = TrainingConfig::parse(read_str(is));
    out.cfg.finalize();
    out.step = read_i64(is);
    (void)read_str(is);  // rng state
    (void)read_u32(is);  // critic flags
    Rng rng(out.cfg.seed);
    out.net = std::make_unique<SegmentationNetwork>(3, out.cfg.net_base_width,
                                                    out.cfg.net_levels, rng);
    AdamOptimizer opt(out.cfg.adam_alpha, out.cfg.adam_beta1, out.cfg.adam_beta2);
    opt.init(*out.net);
    read_net(is, *out.net, opt);
    return out;
}

}  // namespace transnet
