#ifndef TRANSNET_DATASETS_HPP
#define TRANSNET_DATASETS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "transnet/datamodel.hpp"
#include "transnet/rng.hpp"

namespace transnet {

// On-disk layout: <root>/images/<stem>.png, <root>/masks/<stem>.png and an
// optional <root>/manifest.tsv with lines "stem<TAB>category[<TAB>split]".
// Without a manifest every sample gets category "default" and split "train".

struct ManifestEntry {
    std::string stem;
    std::string category = "default";
    std::string split = "train";  // "train" or "eval"
    bool has_mask = false;
};

struct DatasetManifest {
    std::string root;
    std::vector<ManifestEntry> entries;
};

DatasetManifest scan_dataset_dir(const std::string& root);

struct LoadReport {
    // Stems whose mask is almost empty or almost full after binarization
    // (< 0.5% or > 99.5% foreground). Flagged, never auto-deleted.
    std::vector<std::string> suspect_masks;
    // Per-entry load failures ("stem: reason"); failed entries are skipped.
    std::vector<std::string> errors;
};

// Loads every entry that has a mask, resized to image_size (masks are
// re-binarized at 0.5 after the bilinear resize). Eval-split entries are
// skipped.
SourceDataset load_source_dataset(const DatasetManifest& m, int image_size,
                                  LoadReport* report = nullptr);

// Train-split entries with masks form the few-shot pool (budget labeled,
// rest unlabeled); entries without masks are always unlabeled; eval-split
// entries become evaluation samples. When the manifest marks nothing as
// eval, 20% of masked entries are reserved by a seed-independent stable
// hash of the stem. budget < 0 keeps every mask.
TargetDataset load_target_dataset(const DatasetManifest& m, int image_size,
                                  int labeled_budget, std::uint64_t seed,
                                  LoadReport* report = nullptr);

SourceDataset exclude_category(const SourceDataset& d, const std::string& category);

// Deterministic budget-sized labeled subset of a pool; the remaining
// samples are stripped to bare images. Selection shuffles stems with the
// seed, so it is independent of input order. budget < 0 keeps all labels;
// budget > pool size is an error.
TargetDataset few_shot_split(const std::vector<LabeledSample>& pool, int budget,
                             std::uint64_t seed);

// Synthetic benchmark: one shape family per category, drawn over value-noise
// textures whose foreground/background palettes overlap across images. Masks
// are exact rasterized indicators; image values are pre-quantized to 8-bit
// levels so in-memory data matches a PNG round trip.
struct SynthSpec {
    int image_size = 64;
    int source_per_category = 500;
    int target_train = 500;  // target train pool (masks subject to the budget)
    int target_eval = 100;
    std::vector<std::string> source_families = {"ellipse", "polygon", "star"};
    std::string target_family = "blob";
    std::uint64_t seed = 0;
    double min_color_separation = 0.10;  // L1 gap between fg/bg base colors
    double noise_amp = 0.18;

    std::string serialize() const;
    static SynthSpec parse(const std::string& text);
    static const std::vector<std::string>& known_families();
};

struct SynthBenchmark {
    SourceDataset source;
    std::vector<LabeledSample> target_pool;  // apply few_shot_split for a budget
    std::vector<LabeledSample> target_eval;
};

SynthBenchmark generate_synthetic(const SynthSpec& spec);

// Renders one labeled sample of a family. The rng fully determines the
// output.
LabeledSample synth_sample(const SynthSpec& spec, const std::string& family,
                           const std::string& stem, Rng& rng);

// Writes <out_dir>/source and <out_dir>/target trees (images, masks,
// manifest.tsv) plus the spec under <out_dir>/synth_spec.txt. The directory
// is created atomically: content is staged in a temporary sibling and
// renamed into place.
void write_synthetic(const SynthSpec& spec, const std::string& out_dir);

}  // namespace transnet

#endif
