#include "transnet/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "transnet/image_io.hpp"

namespace fs = std::filesystem;

namespace transnet {

DatasetManifest scan_dataset_dir(const std::string& root) {
    fs::path images = fs::path(root) / "images";
    fs::path masks = fs::path(root) / "masks";
    if (!fs::is_directory(images))
        throw std::runtime_error("dataset has no images/ directory: " + root);

    DatasetManifest m;
    m.root = root;
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(images)) {
        if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());

    std::map<std::string, std::pair<std::string, std::string>> meta;  // stem -> (cat, split)
    fs::path manifest = fs::path(root) / "manifest.tsv";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string stem, cat, split;
            std::getline(ls, stem, '\t');
            std::getline(ls, cat, '\t');
            std::getline(ls, split, '\t');
            if (stem.empty() || cat.empty())
                throw std::runtime_error("malformed manifest line " + std::to_string(lineno) +
                                         " in " + manifest.string());
            if (split.empty()) split = "train";
            if (split != "train" && split != "eval")
                throw std::runtime_error("unknown split '" + split + "' in " + manifest.string());
            meta[stem] = {cat, split};
        }
    }

    std::map<std::string, bool> seen;
    for (const std::string& stem : stems) {
        ManifestEntry e;
        e.stem = stem;
        e.has_mask = fs::exists(masks / (stem + ".png"));
        auto it = meta.find(stem);
        if (it != meta.end()) {
            e.category = it->second.first;
            e.split = it->second.second;
            seen[stem] = true;
        }
        m.entries.push_back(std::move(e));
    }
    for (const auto& [stem, cs] : meta) {
        if (!seen.count(stem))
            throw std::runtime_error("manifest stem without image: " + stem + " in " + root);
    }
    return m;
}

namespace {

Image load_image_at(const fs::path& path, int image_size) {
    return Image(resize_bilinear(load_image_rgb(path.string()), image_size, image_size));
}

Mask load_mask_at(const fs::path& path, int image_size, const std::string& stem,
                  LoadReport* report) {
    Tensor g = load_image_gray(path.string());
    for (double& v : g.data) v = v >= 0.5 ? 1.0 : 0.0;
    g = resize_bilinear(g, image_size, image_size);
    for (double& v : g.data) v = v >= 0.5 ? 1.0 : 0.0;
    if (report) {
        double frac = g.sum() / double(g.size());
        if (frac < 0.005 || frac > 0.995) report->suspect_masks.push_back(stem);
    }
    return Mask(std::move(g), Hardness::Hard);
}

LabeledSample load_sample(const DatasetManifest& m, const ManifestEntry& e, int image_size,
                          LoadReport* report) {
    fs::path root(m.root);
    return LabeledSample(load_image_at(root / "images" / (e.stem + ".png"), image_size),
                         load_mask_at(root / "masks" / (e.stem + ".png"), image_size, e.stem,
                                      report),
                         e.stem, e.category);
}

}  // namespace

namespace {
void note_error(LoadReport* report, const std::string& stem, const std::exception& e) {
    if (!report) throw;
    report->errors.push_back(stem + ": " + e.what());
}
}  // namespace

SourceDataset load_source_dataset(const DatasetManifest& m, int image_size,
                                  LoadReport* report) {
    SourceDataset d;
    for (const ManifestEntry& e : m.entries) {
        if (!e.has_mask || e.split != "train") continue;
        try {
            d.samples.push_back(load_sample(m, e, image_size, report));
        } catch (const std::exception& err) {
            note_error(report, e.stem, err);
        }
    }
    return d;
}

TargetDataset load_target_dataset(const DatasetManifest& m, int image_size,
                                  int labeled_budget, std::uint64_t seed,
                                  LoadReport* report) {
    bool explicit_eval = false;
    for (const ManifestEntry& e : m.entries) explicit_eval |= (e.split == "eval");

    // Without an explicit split, 20% of masked entries are held out for
    // evaluation by a stable hash of the stem (seed-independent so the split
    // never migrates between runs).
    auto is_eval = [&](const ManifestEntry& e) {
        if (explicit_eval) return e.split == "eval";
        return e.has_mask && hash_bytes(e.stem.data(), e.stem.size()) % 5 == 0;
    };

    std::vector<LabeledSample> pool, eval;
    std::vector<Image> extra_unlabeled;
    std::set<std::string> cats;
    for (const ManifestEntry& e : m.entries) {
        cats.insert(e.category);
        try {
            if (is_eval(e)) {
                if (!e.has_mask)
                    throw std::runtime_error("eval entry without mask: " + e.stem);
                eval.push_back(load_sample(m, e, image_size, report));
            } else if (e.has_mask) {
                pool.push_back(load_sample(m, e, image_size, report));
            } else {
                extra_unlabeled.push_back(
                    load_image_at(fs::path(m.root) / "images" / (e.stem + ".png"), image_size));
            }
        } catch (const std::exception& err) {
            note_error(report, e.stem, err);
        }
    }
    TargetDataset d = few_shot_split(pool, labeled_budget, seed);
    for (Image& img : extra_unlabeled) d.unlabeled.push_back(std::move(img));
    d.categories = std::move(cats);
    d.set_evaluation_samples(std::move(eval));
    return d;
}

SourceDataset exclude_category(const SourceDataset& d, const std::string& category) {
    SourceDataset out;
    for (const LabeledSample& s : d.samples)
        if (s.category != category) out.samples.push_back(s);
    return out;
}

TargetDataset few_shot_split(const std::vector<LabeledSample>& pool, int budget,
                             std::uint64_t seed) {
    if (budget > int(pool.size()))
        throw std::invalid_argument("few_shot_split: budget exceeds pool size");
    std::vector<size_t> order(pool.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return pool[a].stem < pool[b].stem; });
    Rng rng(seed ^ 0x6665775f73686f74ULL);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int(i) - 1))]);

    size_t keep = budget < 0 ? pool.size() : std::min(pool.size(), size_t(budget));
    TargetDataset d;
    for (size_t i = 0; i < order.size(); ++i) {
        const LabeledSample& s = pool[order[i]];
        d.categories.insert(s.category);
        if (i < keep)
            d.labeled.push_back(s);
        else
            d.unlabeled.push_back(s.image);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

const std::vector<std::string>& SynthSpec::known_families() {
    static const std::vector<std::string> f = {"ellipse", "polygon", "star", "annulus", "blob"};
    return f;
}

std::string SynthSpec::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "image_size = " << image_size << "\n";
    os << "source_per_category = " << source_per_category << "\n";
    os << "target_train = " << target_train << "\n";
    os << "target_eval = " << target_eval << "\n";
    os << "source_families = ";
    for (size_t i = 0; i < source_families.size(); ++i)
        os << (i ? "," : "") << source_families[i];
    os << "\n";
    os << "target_family = " << target_family << "\n";
    os << "seed = " << seed << "\n";
    os << "min_color_separation = " << min_color_separation << "\n";
    os << "noise_amp = " << noise_amp << "\n";
    return os.str();
}

SynthSpec SynthSpec::parse(const std::string& text) {
    SynthSpec s;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("synth spec: malformed line: " + line);
        auto trim = [](std::string v) {
            size_t b = v.find_first_not_of(" \t");
            size_t e = v.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        if (key == "image_size") s.image_size = std::stoi(val);
        else if (key == "source_per_category") s.source_per_category = std::stoi(val);
        else if (key == "target_train") s.target_train = std::stoi(val);
        else if (key == "target_eval") s.target_eval = std::stoi(val);
        else if (key == "target_family") s.target_family = val;
        else if (key == "seed") s.seed = std::stoull(val);
        else if (key == "min_color_separation") s.min_color_separation = std::stod(val);
        else if (key == "noise_amp") s.noise_amp = std::stod(val);
        else if (key == "source_families") {
            s.source_families.clear();
            std::istringstream fs_(val);
            std::string f;
            while (std::getline(fs_, f, ','))
                if (!f.empty()) s.source_families.push_back(f);
        } else {
            throw std::invalid_argument("synth spec: unknown key: " + key);
        }
    }
    return s;
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Point {
    double y, x;
};

bool point_in_polygon(const std::vector<Point>& poly, double y, double x) {
    bool inside = false;
    size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point &a = poly[i], &b = poly[j];
        if ((a.y > y) != (b.y > y)) {
            double t = (y - a.y) / (b.y - a.y);
            if (x < a.x + t * (b.x - a.x)) inside = !inside;
        }
    }
    return inside;
}

// Rasterizes one shape draw into a hard (1,1,S,S) mask. Coordinates are
// normalized pixel centers in [0,1].
Tensor rasterize(int S, const std::function<bool(double, double)>& inside) {
    Tensor m(Shape(1, 1, S, S));
    for (int y = 0; y < S; ++y) {
        double v = (y + 0.5) / S;
        for (int x = 0; x < S; ++x) {
            double u = (x + 0.5) / S;
            m.at(0, 0, y, x) = inside(v, u) ? 1.0 : 0.0;
        }
    }
    return m;
}

Tensor draw_shape(const std::string& family, int S, Rng& rng) {
    for (int attempt = 0;; ++attempt) {
        double cy = rng.uniform(0.38, 0.62), cx = rng.uniform(0.38, 0.62);
        double rot = rng.uniform(0.0, 2.0 * kPi);
        Tensor m;
        if (family == "ellipse") {
            double a = rng.uniform(0.16, 0.30), b = rng.uniform(0.16, 0.30);
            m = rasterize(S, [&](double y, double x) {
                double dy = y - cy, dx = x - cx;
                double ry = dy * std::cos(rot) - dx * std::sin(rot);
                double rx = dy * std::sin(rot) + dx * std::cos(rot);
                return (ry / a) * (ry / a) + (rx / b) * (rx / b) <= 1.0;
            });
        } else if (family == "polygon") {
            int k = rng.uniform_int(3, 6);
            double R = rng.uniform(0.18, 0.34);
            std::vector<Point> poly;
            for (int i = 0; i < k; ++i) {
                double jitter = rng.uniform(0.9, 1.1);
                double a = rot + 2.0 * kPi * i / k;
                poly.push_back({cy + R * jitter * std::sin(a), cx + R * jitter * std::cos(a)});
            }
            m = rasterize(S, [&](double y, double x) { return point_in_polygon(poly, y, x); });
        } else if (family == "star") {
            int p = rng.uniform_int(5, 7);
            double R = rng.uniform(0.20, 0.36);
            double r = R * rng.uniform(0.38, 0.55);
            std::vector<Point> poly;
            for (int i = 0; i < 2 * p; ++i) {
                double rad = (i % 2 == 0) ? R : r;
                double a = rot + kPi * i / p;
                poly.push_back({cy + rad * std::sin(a), cx + rad * std::cos(a)});
            }
            m = rasterize(S, [&](double y, double x) { return point_in_polygon(poly, y, x); });
        } else if (family == "annulus") {
            double R = rng.uniform(0.22, 0.36);
            double r = R * rng.uniform(0.35, 0.60);
            m = rasterize(S, [&](double y, double x) {
                double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                return d2 <= R * R && d2 > r * r;
            });
        } else if (family == "blob") {
            double R = rng.uniform(0.18, 0.30);
            double amp[4], phase[4];
            for (int k = 0; k < 4; ++k) {
                amp[k] = rng.uniform(0.0, 0.4 / (k + 2));
                phase[k] = rng.uniform(0.0, 2.0 * kPi);
            }
            m = rasterize(S, [&](double y, double x) {
                double dy = y - cy, dx = x - cx;
                double d = std::sqrt(dy * dy + dx * dx);
                double phi = std::atan2(dy, dx);
                double rr = 1.0;
                for (int k = 0; k < 4; ++k) rr += amp[k] * std::cos((k + 2) * phi + phase[k]);
                return d <= R * rr;
            });
        } else {
            throw std::invalid_argument("unknown shape family: " + family);
        }
        double frac = m.sum() / double(S * S);
        if ((frac >= 0.10 && frac <= 0.60) || attempt >= 40) return m;
    }
}

// Bilinearly interpolated random lattice ("value noise"), zero-mean-ish in
// [0,1].
Tensor value_noise(int S, int cell, Rng& rng) {
    int L = S / cell + 2;
    std::vector<double> lattice(size_t(L) * L);
    for (double& v : lattice) v = rng.uniform();
    Tensor out(Shape(1, 1, S, S));
    for (int y = 0; y < S; ++y) {
        double fy = double(y) / cell;
        int iy = int(fy);
        double ty = fy - iy;
        for (int x = 0; x < S; ++x) {
            double fx = double(x) / cell;
            int ix = int(fx);
            double tx = fx - ix;
            double v00 = lattice[size_t(iy) * L + ix], v01 = lattice[size_t(iy) * L + ix + 1];
            double v10 = lattice[size_t(iy + 1) * L + ix],
                   v11 = lattice[size_t(iy + 1) * L + ix + 1];
            out.at(0, 0, y, x) =
                (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
        }
    }
    return out;
}

// Base color plus two noise octaves, per channel offsets shared across the
// region. The octave cell ranges differ between foreground and background
// (fine- vs coarse-grained), so the regions have distinct spectral
// signatures and the task stays solvable by a small network even when the
// base colors land close together.
Tensor textured_region(int S, const double base[3], double amp, int cell_lo, int cell_hi,
                       Rng& rng) {
    Tensor n1 = value_noise(S, rng.uniform_int(cell_lo, cell_hi), rng);
    Tensor n2 = value_noise(S, rng.uniform_int(2 * cell_lo, 2 * cell_hi), rng);
    double tint[3];
    for (int c = 0; c < 3; ++c) tint[c] = rng.uniform(-0.05, 0.05);
    Tensor img(Shape(1, 3, S, S));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
                img.at(0, c, y, x) = base[c] + tint[c] +
                                     amp * (n1.at(0, 0, y, x) - 0.5) * 2.0 +
                                     0.5 * amp * (n2.at(0, 0, y, x) - 0.5) * 2.0;
    return img;
}

}  // namespace

LabeledSample synth_sample(const SynthSpec& spec, const std::string& family,
                           const std::string& stem, Rng& rng) {
    const int S = spec.image_size;
    Tensor mask = draw_shape(family, S, rng);

    // Base colors are drawn from a deliberately narrow band: the reliable
    // foreground cue is the spectral signature of the texture, not the
    // color, so a few labeled examples generalize instead of latching onto
    // the accidental colors of the training shots.
    double fg[3], bg[3];
    for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(0.35, 0.65);
    for (int attempt = 0;; ++attempt) {
        double sep = 0.0;
        for (int c = 0; c < 3; ++c) {
            bg[c] = rng.uniform(0.35, 0.65);
            sep += std::abs(fg[c] - bg[c]);
        }
        if (sep / 3.0 >= spec.min_color_separation || attempt >= 40) break;
    }

    // Foreground: fine-grained texture; background: coarse-grained.
    Tensor fg_tex = textured_region(S, fg, spec.noise_amp, 2, 3, rng);
    Tensor bg_tex = textured_region(S, bg, spec.noise_amp, 8, 16, rng);

    double grad_amp = rng.uniform(0.0, 0.12);
    double grad_dir = rng.uniform(0.0, 2.0 * kPi);

    Tensor img(Shape(1, 3, S, S));
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            double g = grad_amp * (((y + 0.5) / S - 0.5) * std::sin(grad_dir) +
                                   ((x + 0.5) / S - 0.5) * std::cos(grad_dir));
            bool in = mask.at(0, 0, y, x) > 0.5;
            for (int c = 0; c < 3; ++c) {
                double v = (in ? fg_tex.at(0, c, y, x) : bg_tex.at(0, c, y, x)) + g;
                v = std::clamp(v, 0.0, 1.0);
                // Pre-quantize so in-memory pixels equal a PNG round trip.
                img.at(0, c, y, x) = std::round(v * 255.0) / 255.0;
            }
        }
    }
    return LabeledSample(Image(std::move(img)), Mask(std::move(mask), Hardness::Hard), stem,
                         family);
}

namespace {
Rng sample_rng(const SynthSpec& spec, const std::string& key) {
    std::uint64_t h = hash_bytes(key.data(), key.size());
    return Rng(h ^ (spec.seed * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL));
}

std::string stem_of(const std::string& family, const char* tag, int i) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s%s_%04d", family.c_str(), tag, i);
    return buf;
}
}  // namespace

SynthBenchmark generate_synthetic(const SynthSpec& spec) {
    for (const std::string& f : spec.source_families)
        if (f == spec.target_family)
            throw std::invalid_argument("target family must be disjoint from source families: " +
                                        f);
    SynthBenchmark b;
    for (const std::string& f : spec.source_families) {
        for (int i = 0; i < spec.source_per_category; ++i) {
            std::string stem = stem_of(f, "", i);
            Rng rng = sample_rng(spec, stem);
            b.source.samples.push_back(synth_sample(spec, f, stem, rng));
        }
    }
    for (int i = 0; i < spec.target_train; ++i) {
        std::string stem = stem_of(spec.target_family, "", i);
        Rng rng = sample_rng(spec, stem);
        b.target_pool.push_back(synth_sample(spec, spec.target_family, stem, rng));
    }
    for (int i = 0; i < spec.target_eval; ++i) {
        std::string stem = stem_of(spec.target_family, "_eval", i);
        Rng rng = sample_rng(spec, stem);
        b.target_eval.push_back(synth_sample(spec, spec.target_family, stem, rng));
    }
    return b;
}

namespace {
void write_split(const fs::path& root, const std::vector<const LabeledSample*>& samples,
                 const std::vector<std::string>& splits) {
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    std::ofstream manifest(root / "manifest.tsv");
    for (size_t i = 0; i < samples.size(); ++i) {
        const LabeledSample& s = *samples[i];
        save_image_rgb((root / "images" / (s.stem + ".png")).string(), s.image.data);
        save_image_gray((root / "masks" / (s.stem + ".png")).string(), s.mask.data);
        manifest << s.stem << '\t' << s.category << '\t' << splits[i] << '\n';
    }
}
}  // namespace

void write_synthetic(const SynthSpec& spec, const std::string& out_dir) {
    if (fs::exists(out_dir)) throw std::runtime_error("output directory exists: " + out_dir);
    SynthBenchmark b = generate_synthetic(spec);

    fs::path tmp = fs::path(out_dir).parent_path() /
                   (fs::path(out_dir).filename().string() + ".tmp");
    fs::remove_all(tmp);

    std::vector<const LabeledSample*> src;
    std::vector<std::string> src_splits;
    for (const auto& s : b.source.samples) {
        src.push_back(&s);
        src_splits.push_back("train");
    }
    write_split(tmp / "source", src, src_splits);

    std::vector<const LabeledSample*> tgt;
    std::vector<std::string> tgt_splits;
    for (const auto& s : b.target_pool) {
        tgt.push_back(&s);
        tgt_splits.push_back("train");
    }
    for (const auto& s : b.target_eval) {
        tgt.push_back(&s);
        tgt_splits.push_back("eval");
    }
    write_split(tmp / "target", tgt, tgt_splits);

    std::ofstream specfile(tmp / "synth_spec.txt");
    specfile << spec.serialize();
    specfile.close();

    fs::rename(tmp, out_dir);
}

}  // namespace transnet
