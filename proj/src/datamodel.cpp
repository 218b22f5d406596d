#include "transnet/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace transnet {

namespace {
void check_unit_range(const Tensor& t, const char* what) {
    for (double v : t.data)
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw std::invalid_argument(std::string(what) + ": values must be finite in [0,1]");
}
}  // namespace

Image::Image(Tensor t) : data(std::move(t)) {
    if (data.shape.n != 1)
        throw std::invalid_argument("Image: expected single-sample tensor");
    check_unit_range(data, "Image");
}

Mask::Mask(Tensor t, Hardness h) : data(std::move(t)), hardness(h) {
    if (data.shape.n != 1 || data.shape.c != 1)
        throw std::invalid_argument("Mask: expected (1,1,H,W) tensor");
    check_unit_range(data, "Mask");
    if (hardness == Hardness::Hard)
        for (double v : data.data)
            if (v != 0.0 && v != 1.0)
                throw std::invalid_argument("Mask: hard mask must contain only {0,1}");
}

Mask Mask::binarized(double threshold) const {
    Tensor t = data;
    for (double& v : t.data) v = v >= threshold ? 1.0 : 0.0;
    return Mask(std::move(t), Hardness::Hard);
}

LabeledSample::LabeledSample(Image img, Mask m, std::string stem_, std::string cat)
    : image(std::move(img)), mask(std::move(m)), stem(std::move(stem_)), category(std::move(cat)) {
    if (image.height() != mask.height() || image.width() != mask.width())
        throw std::invalid_argument("LabeledSample: image/mask dimensions disagree");
    if (!mask.is_hard())
        throw std::invalid_argument("LabeledSample: ground-truth mask must be hard");
}

std::set<std::string> SourceDataset::categories() const {
    std::set<std::string> cats;
    for (const auto& s : samples)
        if (!s.category.empty()) cats.insert(s.category);
    return cats;
}

Mask complement(const Mask& m) {
    Tensor t = m.data;
    for (double& v : t.data) v = 1.0 - v;
    return Mask(std::move(t), m.hardness);
}

Image masked_image(const Image& x, const Mask& m) {
    if (x.height() != m.height() || x.width() != m.width())
        throw std::invalid_argument("masked_image: dimension mismatch");
    Tensor out = x.data;
    const std::int64_t plane = std::int64_t(x.height()) * x.width();
    for (int c = 0; c < x.channels(); ++c)
        for (std::int64_t i = 0; i < plane; ++i)
            out.data[c * plane + i] *= m.data.data[i];
    return Image(std::move(out));
}

const std::set<std::string>& TrainingConfig::known_ablations() {
    static const std::set<std::string> flags = {
        "no_self_sup", "no_pseudo", "no_inner", "no_outer", "single_discriminator"};
    return flags;
}

void TrainingConfig::finalize() {
    if (radius_min == 0) radius_min = std::max(1, int(std::lround(0.04 * image_size)));
    if (radius_max == 0) radius_max = std::max(radius_min, int(std::lround(0.21 * image_size)));

    if (lambda_gp < 0) throw std::invalid_argument("config: lambda_gp must be >= 0");
    if (n_critic < 1) throw std::invalid_argument("config: n_critic must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
        throw std::invalid_argument("config: adam betas must be in [0,1)");
    if (radius_min < 1 || radius_min > radius_max || radius_max >= image_size / 2)
        throw std::invalid_argument("config: need 1 <= radius_min <= radius_max < image_size/2");
    int down = 1 << (net_levels - 1);
    if (image_size < 8 || image_size % down != 0)
        throw std::invalid_argument(
            "config: image_size must be >= 8 and divisible by 2^(net_levels-1)");
    if (labeled_budget < 0) throw std::invalid_argument("config: labeled_budget must be >= 0");
    if (net_levels < 1 || net_base_width < 1 || critic_base_width < 1 || critic_blocks < 1)
        throw std::invalid_argument("config: network dimensions must be >= 1");
    if (pseudo_inner != "dilate_complement" && pseudo_inner != "erode_complement")
        throw std::invalid_argument("config: pseudo_inner must be dilate_complement or erode_complement");
    for (const auto& f : ablation)
        if (!known_ablations().count(f))
            throw std::invalid_argument("config: unknown ablation flag '" + f + "'");
    // no_inner + no_outer together is the adversarial-free baseline.
    if (has_ablation("single_discriminator") &&
        (has_ablation("no_inner") || has_ablation("no_outer")))
        throw std::invalid_argument("config: single_discriminator excludes no_inner/no_outer");
}

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}
}  // namespace

std::string TrainingConfig::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "lambda_gp = " << lambda_gp << "\n";
    os << "n_critic = " << n_critic << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "adam_alpha = " << adam_alpha << "\n";
    os << "adam_beta1 = " << adam_beta1 << "\n";
    os << "adam_beta2 = " << adam_beta2 << "\n";
    os << "tau = " << tau << "\n";
    os << "eta = " << eta << "\n";
    os << "xi = " << xi << "\n";
    os << "radius_min = " << radius_min << "\n";
    os << "radius_max = " << radius_max << "\n";
    os << "image_size = " << image_size << "\n";
    os << "seed = " << seed << "\n";
    std::string flags;
    for (const auto& f : ablation) flags += (flags.empty() ? "" : ",") + f;
    os << "ablation = " << flags << "\n";
    os << "labeled_budget = " << labeled_budget << "\n";
    os << "steps = " << steps << "\n";
    os << "eval_every = " << eval_every << "\n";
    os << "checkpoint_every = " << checkpoint_every << "\n";
    os << "early_stop_patience = " << early_stop_patience << "\n";
    os << "net_levels = " << net_levels << "\n";
    os << "net_base_width = " << net_base_width << "\n";
    os << "critic_base_width = " << critic_base_width << "\n";
    os << "critic_blocks = " << critic_blocks << "\n";
    os << "pseudo_inner = " << pseudo_inner << "\n";
    return os.str();
}

TrainingConfig TrainingConfig::parse(const std::string& text) {
    TrainingConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: malformed line '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        auto as_d = [&] { return std::stod(val); };
        auto as_i = [&] { return std::stoi(val); };
        if (key == "lambda_gp") cfg.lambda_gp = as_d();
        else if (key == "n_critic") cfg.n_critic = as_i();
        else if (key == "batch_size") cfg.batch_size = as_i();
        else if (key == "adam_alpha") cfg.adam_alpha = as_d();
        else if (key == "adam_beta1") cfg.adam_beta1 = as_d();
        else if (key == "adam_beta2") cfg.adam_beta2 = as_d();
        else if (key == "tau") cfg.tau = as_d();
        else if (key == "eta") cfg.eta = as_d();
        else if (key == "xi") cfg.xi = as_d();
        else if (key == "radius_min") cfg.radius_min = as_i();
        else if (key == "radius_max") cfg.radius_max = as_i();
        else if (key == "image_size") cfg.image_size = as_i();
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "labeled_budget") cfg.labeled_budget = as_i();
        else if (key == "steps") cfg.steps = as_i();
        else if (key == "eval_every") cfg.eval_every = as_i();
        else if (key == "checkpoint_every") cfg.checkpoint_every = as_i();
        else if (key == "early_stop_patience") cfg.early_stop_patience = as_i();
        else if (key == "net_levels") cfg.net_levels = as_i();
        else if (key == "net_base_width") cfg.net_base_width = as_i();
        else if (key == "critic_base_width") cfg.critic_base_width = as_i();
        else if (key == "critic_blocks") cfg.critic_blocks = as_i();
        else if (key == "pseudo_inner") cfg.pseudo_inner = val;
        else if (key == "ablation") {
            cfg.ablation.clear();
            std::istringstream fs(val);
            std::string flag;
            while (std::getline(fs, flag, ',')) {
                flag = trim(flag);
                if (!flag.empty()) cfg.ablation.insert(flag);
            }
        } else {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    return cfg;
}

}  // namespace transnet
