#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "transnet/datasets.hpp"
#include "transnet/image_io.hpp"
#include "transnet/metrics.hpp"
#include "transnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace transnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string score_json(const Scores& s, std::uint64_t pixels) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"pa\":%.2f,\"mpa\":%.2f,\"miou\":%.2f,\"fwiou\":%.2f,\"pixels\":%llu}",
                  100.0 * s.pa, 100.0 * s.mpa, 100.0 * s.miou, 100.0 * s.fwiou,
                  static_cast<unsigned long long>(pixels));
    return buf;
}

void print_scores(const Scores& s) {
    std::printf("PA %.2f  MPA %.2f  MIoU %.2f  FWIoU %.2f  (all scores in %%)\n", 100.0 * s.pa,
                100.0 * s.mpa, 100.0 * s.miou, 100.0 * s.fwiou);
}

int cmd_generate_synth(const std::string& spec_path, const std::string& out_dir,
                       std::int64_t seed_override) {
    SynthSpec spec;
    try {
        if (!spec_path.empty()) spec = SynthSpec::parse(read_file(spec_path));
        if (seed_override >= 0) spec.seed = std::uint64_t(seed_override);
    } catch (const std::exception& e) {
        std::cerr << "invalid spec: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        write_synthetic(spec, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "generation failed: " << e.what() << "\n";
        return kExitUsage;
    }
    for (const std::string& f : spec.source_families)
        std::printf("source %-10s %d\n", f.c_str(), spec.source_per_category);
    std::printf("target %-10s %d train + %d eval\n", spec.target_family.c_str(),
                spec.target_train, spec.target_eval);
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& source_dir,
              const std::string& target_dir, const std::string& out_dir,
              std::int64_t seed, int labeled_budget, const std::string& ablation, int steps,
              int image_size) {
    TrainingConfig cfg;
    try {
        if (!config_path.empty()) cfg = TrainingConfig::parse(read_file(config_path));
        if (seed >= 0) cfg.seed = std::uint64_t(seed);
        if (labeled_budget >= 0) cfg.labeled_budget = labeled_budget;
        if (steps >= 0) cfg.steps = steps;
        if (image_size > 0) cfg.image_size = image_size;
        if (!ablation.empty()) {
            cfg.ablation.clear();
            std::istringstream as(ablation);
            std::string flag;
            while (std::getline(as, flag, ','))
                if (!flag.empty()) cfg.ablation.insert(flag);
        }
        cfg.finalize();
    } catch (const std::exception& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        LoadReport report;
        SourceDataset source =
            load_source_dataset(scan_dataset_dir(source_dir), cfg.image_size, &report);
        TargetDataset target =
            load_target_dataset(scan_dataset_dir(target_dir), cfg.image_size,
                                cfg.labeled_budget, cfg.seed, &report);
        for (const std::string& stem : report.suspect_masks)
            std::cerr << "warning: near-degenerate mask: " << stem << "\n";

        fs::create_directories(out_dir);
        {
            std::ofstream cf(fs::path(out_dir) / "config.txt");
            cf << cfg.serialize();
        }
        std::ofstream log(fs::path(out_dir) / "train.log");

        Trainer trainer(cfg, std::move(source), std::move(target));
        RunResult res = trainer.train(&log, out_dir);
        if (res.aborted_non_finite) {
            std::cerr << "aborted on non-finite loss: " << res.abort_reason << "\n"
                      << "last-good checkpoint: " << out_dir << "/last.ckpt\n";
            return kExitNumeric;
        }
        std::printf("trained %lld steps\n", static_cast<long long>(res.steps_done));
        if (res.has_best) {
            Scores final = trainer.evaluate();
            std::uint64_t px = std::uint64_t(trainer.config().image_size) *
                               trainer.config().image_size * trainer.eval_count();
            print_scores(final);
            std::ofstream sf(fs::path(out_dir) / "scores.json");
            sf << score_json(final, px) << "\n";
        }
        return kExitOk;
    } catch (const NonFiniteError& e) {
        std::cerr << "aborted on non-finite loss: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "training failed: " << e.what() << "\n";
        return kExitUsage;
    }
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& out_file) {
    try {
        Trainer::LoadedNetwork ln = Trainer::load_network(ckpt);
        DatasetManifest manifest = scan_dataset_dir(data_dir);

        bool any_eval = false;
        for (const auto& e : manifest.entries) any_eval |= (e.split == "eval");

        ConfusionMatrix cm;
        int used = 0;
        for (const auto& e : manifest.entries) {
            if (!e.has_mask) continue;
            if (any_eval && e.split != "eval") continue;
            Tensor img = resize_bilinear(
                load_image_rgb((fs::path(data_dir) / "images" / (e.stem + ".png")).string()),
                ln.cfg.image_size, ln.cfg.image_size);
            Tensor g = load_image_gray(
                (fs::path(data_dir) / "masks" / (e.stem + ".png")).string());
            for (double& v : g.data) v = v >= 0.5 ? 1.0 : 0.0;
            g = resize_bilinear(g, ln.cfg.image_size, ln.cfg.image_size);
            for (double& v : g.data) v = v >= 0.5 ? 1.0 : 0.0;
            accumulate(cm, ln.net->segment(Image(img)), Mask(std::move(g), Hardness::Hard));
            ++used;
        }
        if (used == 0) {
            std::cerr << "no masked samples to evaluate in " << data_dir << "\n";
            return kExitUsage;
        }
        Scores s = scores(cm);
        print_scores(s);
        std::string line = score_json(s, cm.total());
        std::cout << line << "\n";
        if (!out_file.empty()) {
            std::ofstream of(out_file);
            of << line << "\n";
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "eval failed: " << e.what() << "\n";
        return kExitUsage;
    }
}

int cmd_predict(const std::string& ckpt, const std::vector<std::string>& images,
                const std::string& out_dir, bool overlay) {
    Trainer::LoadedNetwork ln;
    try {
        ln = Trainer::load_network(ckpt);
        fs::create_directories(out_dir);
    } catch (const std::exception& e) {
        std::cerr << "predict failed: " << e.what() << "\n";
        return kExitUsage;
    }
    int failures = 0;
    for (const std::string& path : images) {
        try {
            std::string stem = fs::path(path).stem().string();
            Tensor img =
                resize_bilinear(load_image_rgb(path), ln.cfg.image_size, ln.cfg.image_size);
            Image x(img);
            Mask soft = ln.net->segment(x);
            Mask hard = soft.binarized(0.5);
            save_image_gray((fs::path(out_dir) / (stem + "_soft.png")).string(), soft.data);
            save_image_gray((fs::path(out_dir) / (stem + "_hard.png")).string(), hard.data);
            if (overlay) {
                const int H = ln.cfg.image_size, W = ln.cfg.image_size;
                Tensor panel(Shape(1, 3, H, 3 * W));
                Image fg = masked_image(x, hard);
                for (int c = 0; c < 3; ++c)
                    for (int y = 0; y < H; ++y)
                        for (int xx = 0; xx < W; ++xx) {
                            panel.at(0, c, y, xx) = x.data.at(0, c, y, xx);
                            panel.at(0, c, y, W + xx) = soft.data.at(0, 0, y, xx);
                            panel.at(0, c, y, 2 * W + xx) = fg.data.at(0, c, y, xx);
                        }
                save_image_rgb((fs::path(out_dir) / (stem + "_overlay.png")).string(), panel);
            }
        } catch (const std::exception& e) {
            std::cerr << "failed on " << path << ": " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? kExitOk : kExitPartial;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boundary-knowledge-transfer foreground segmentation"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, config_path, source_dir, target_dir, ckpt, data_dir,
        out_file, ablation;
    std::vector<std::string> images;
    std::int64_t seed = -1;
    int labeled_budget = -1, steps = -1, image_size = 0;
    bool overlay = false;

    auto* gen = app.add_subcommand("generate-synth", "Write a synthetic benchmark dataset");
    gen->add_option("--spec", spec_path, "Synthetic spec file (key = value)");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--seed", seed, "Override the spec seed");

    auto* train = app.add_subcommand("train", "Train on a source/target dataset pair");
    train->add_option("--config", config_path, "Training config file (key = value)");
    train->add_option("--source", source_dir, "Source dataset directory")->required();
    train->add_option("--target", target_dir, "Target dataset directory")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--seed", seed, "Override config seed");
    train->add_option("--labeled-budget", labeled_budget, "Override labeled budget");
    train->add_option("--ablation", ablation, "Comma-separated ablation flags");
    train->add_option("--steps", steps, "Override step budget");
    train->add_option("--image-size", image_size, "Override working resolution");

    auto* ev = app.add_subcommand("eval", "Score a checkpoint on a masked dataset");
    ev->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    ev->add_option("--data", data_dir, "Dataset directory")->required();
    ev->add_option("--out", out_file, "Optional score record file");

    auto* pred = app.add_subcommand("predict", "Write soft/hard masks for images");
    pred->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    pred->add_option("--out", out_dir, "Output directory")->required();
    pred->add_option("images", images, "Input image paths")->required();
    pred->add_flag("--overlay", overlay, "Also write input|mask|foreground panels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (gen->parsed()) return cmd_generate_synth(spec_path, out_dir, seed);
    if (train->parsed())
        return cmd_train(config_path, source_dir, target_dir, out_dir, seed, labeled_budget,
                         ablation, steps, image_size);
    if (ev->parsed()) return cmd_eval(ckpt, data_dir, out_file);
    if (pred->parsed()) return cmd_predict(ckpt, images, out_dir, overlay);
    return kExitUsage;
}
