#include "fuselearn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "json.hpp"

#include "fuselearn/image.hpp"
#include "fuselearn/image_io.hpp"

namespace fuselearn::synth {

namespace fs = std::filesystem;

SignalMode signal_mode_from_name(const std::string& s) {
    if (s == "image-dominant" || s == "image_dominant") return SignalMode::image_dominant;
    if (s == "clinical-dominant" || s == "clinical_dominant") return SignalMode::clinical_dominant;
    if (s == "complementary") return SignalMode::complementary;
    throw ConfigError("unknown signal mode: '" + s + "'");
}

std::string signal_mode_name(SignalMode m) {
    switch (m) {
        case SignalMode::image_dominant: return "image-dominant";
        case SignalMode::clinical_dominant: return "clinical-dominant";
        case SignalMode::complementary: return "complementary";
    }
    return "?";
}

void SynthConfig::validate() const {
    if (n_subjects < 10) throw ConfigError("synth: need at least 10 subjects");
    if (image_size < 16) throw ConfigError("synth: image size must be >= 16");
    double sum = 0;
    for (double p : class_priors) {
        if (!(p > 0)) throw ConfigError("synth: class priors must be positive");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("synth: class priors must sum to 1");
    if (missing_rate < 0 || missing_rate > 0.6)
        throw ConfigError("synth: missing rate must be in [0, 0.6]");
    if (signal_scale <= 0) throw ConfigError("synth: signal scale must be > 0");
    if (ehr_jitter_hours < 0) throw ConfigError("synth: EHR jitter must be >= 0");
    if (schema.n_binary < 0 || schema.n_categorical < 0 || schema.n_continuous < 1)
        throw ConfigError("synth: bad schema shape");
    if (schema.informative_frac < 0 || schema.informative_frac > 1)
        throw ConfigError("synth: informative fraction must be in [0,1]");
}

int derive_risk_label(const OutcomeRecord& o, bool include_intubation) {
    if (o.died || o.icu_admitted || (include_intubation && o.intubated)) return 2;  // high
    if (o.los_days < 1.0) return 0;                                                 // low
    return 1;                                                                       // intermediate
}

clin::TypedFeatureSchema build_schema(const SchemaShape& shape) {
    clin::TypedFeatureSchema schema;
    char buf[48];
    for (int i = 0; i < shape.n_binary; ++i) {
        std::snprintf(buf, sizeof(buf), "comorbidity_%02d", i);
        schema.features.push_back({buf, clin::FeatureKind::binary, {}});
    }
    for (int i = 0; i < shape.n_categorical; ++i) {
        std::snprintf(buf, sizeof(buf), "category_%02d", i);
        std::vector<std::string> cats;
        const int vocab = 3 + i % 2;
        for (int v = 0; v < vocab; ++v) cats.push_back(std::string(1, static_cast<char>('a' + v)));
        schema.features.push_back({buf, clin::FeatureKind::categorical, cats});
    }
    for (int i = 0; i < shape.n_continuous; ++i) {
        std::snprintf(buf, sizeof(buf), "lab_%02d", i);
        schema.features.push_back({buf, clin::FeatureKind::continuous, {}});
    }
    schema.validate();
    return schema;
}

namespace {

std::string subject_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%05d", index);
    return buf;
}

// ---- image synthesis -------------------------------------------------------

struct Ellipse {
    double cy, cx, ry, rx, intensity;
};

void draw_ellipse(img::RawImage& im, const Ellipse& e) {
    const int r0 = std::max(0, static_cast<int>(std::floor(e.cy - e.ry)));
    const int r1 = std::min(im.height - 1, static_cast<int>(std::ceil(e.cy + e.ry)));
    const int c0 = std::max(0, static_cast<int>(std::floor(e.cx - e.rx)));
    const int c1 = std::min(im.width - 1, static_cast<int>(std::ceil(e.cx + e.rx)));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double dy = (r - e.cy) / e.ry;
            const double dx = (c - e.cx) / e.rx;
            const double d2 = dy * dy + dx * dx;
            if (d2 > 1.0) continue;
            const double v = im.at(r, c) + e.intensity * (1.0 - d2);
            im.at(r, c) = static_cast<uint8_t>(std::min(255.0, std::max(0.0, v)));
        }
    }
}

img::RawImage make_lung_mask(int S) {
    img::RawImage m;
    m.width = m.height = S;
    m.pixels.assign(static_cast<size_t>(S) * S, 0);
    const double ry = 0.30 * S, rx = 0.16 * S, cy = 0.48 * S;
    const double cx_left = 0.32 * S, cx_right = 0.68 * S;
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            const double dyl = (r - cy) / ry, dxl = (c - cx_left) / rx;
            const double dxr = (c - cx_right) / rx;
            if (dyl * dyl + dxl * dxl <= 1.0 || dyl * dyl + dxr * dxr <= 1.0)
                m.at(r, c) = 255;
        }
    }
    return m;
}

img::RawImage make_full_mask(int S) {
    img::RawImage m;
    m.width = m.height = S;
    m.pixels.assign(static_cast<size_t>(S) * S, 255);
    return m;
}

img::RawImage make_background(int S, Rng& rng) {
    img::RawImage im;
    im.width = im.height = S;
    im.pixels.resize(static_cast<size_t>(S) * S);
    // a few random low-frequency waves plus pixel noise
    double fy[3], fx[3], ph[3], amp[3];
    for (int k = 0; k < 3; ++k) {
        fy[k] = rng.uniform(0.5, 2.5) * 2 * M_PI / S;
        fx[k] = rng.uniform(0.5, 2.5) * 2 * M_PI / S;
        ph[k] = rng.uniform(0, 2 * M_PI);
        amp[k] = rng.uniform(4, 10);
    }
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            double v = 72.0;
            for (int k = 0; k < 3; ++k) v += amp[k] * std::sin(fy[k] * r + fx[k] * c + ph[k]);
            v += rng.normal(0, 6.0);
            im.at(r, c) = static_cast<uint8_t>(std::min(255.0, std::max(0.0, v)));
        }
    }
    return im;
}

struct PatternParams {
    int count_lo = 0, count_hi = 0;  // inclusive range
    double intensity = 0, intensity_sd = 0;
};

// Class-dependent opacity pattern. In complementary mode the intermediate and
// high classes draw from the same image distribution (only clinical data can
// tell them apart) and the ranges overlap the low class, leaving genuinely
// ambiguous images; image-dominant mode separates all three classes cleanly.
PatternParams pattern_for(SignalMode mode, int label) {
    switch (mode) {
        case SignalMode::image_dominant:
            if (label == 0) return {0, 1, 16, 4};
            if (label == 1) return {3, 3, 42, 6};
            return {6, 6, 70, 8};
        case SignalMode::clinical_dominant:
            return {1, 2, 26, 6};
        case SignalMode::complementary:
            if (label == 0) return {0, 2, 22, 6};
            return {2, 5, 34, 8};
    }
    return {};
}

void add_patterns(img::RawImage& im, const img::RawImage& mask, int quadrant,
                  const PatternParams& pp, Rng& rng) {
    const int S = im.width;
    const int count =
        pp.count_lo +
        static_cast<int>(rng.uniform_int(static_cast<uint64_t>(pp.count_hi - pp.count_lo + 1)));
    for (int k = 0; k < count; ++k) {
        Ellipse e;
        e.ry = rng.uniform(0.05, 0.11) * S;
        e.rx = rng.uniform(0.05, 0.11) * S;
        e.intensity = std::max(4.0, rng.normal(pp.intensity, pp.intensity_sd));
        // rejection-sample a center inside the allowed region
        for (int attempt = 0; attempt < 200; ++attempt) {
            double r, c;
            if (quadrant >= 0) {
                const double half = S / 2.0;
                const double r_base = (quadrant / 2) * half;
                const double c_base = (quadrant % 2) * half;
                r = r_base + rng.uniform(0.18 * half, 0.82 * half);
                c = c_base + rng.uniform(0.18 * half, 0.82 * half);
            } else {
                r = rng.uniform(0.1 * S, 0.9 * S);
                c = rng.uniform(0.1 * S, 0.9 * S);
            }
            const int ri = static_cast<int>(r), ci = static_cast<int>(c);
            if (mask.at(ri, ci) != 0) {
                e.cy = r;
                e.cx = c;
                draw_ellipse(im, e);
                break;
            }
        }
    }
}

// ---- clinical synthesis ---------------------------------------------------

// How strongly a feature's distribution separates classes, per signal mode:
// clinical-dominant separates all three, complementary separates only the
// high class, image-dominant not at all.
double class_shift(SignalMode mode, int label) {
    switch (mode) {
        case SignalMode::image_dominant: return 0.0;
        case SignalMode::clinical_dominant: return static_cast<double>(label);
        case SignalMode::complementary: return label == 2 ? 1.6 : 0.0;
    }
    return 0.0;
}

bool informative(int index, int total, double frac) {
    return index < static_cast<int>(std::lround(frac * total));
}

clin::ClinicalRecord make_record(const SynthConfig& cfg, const clin::TypedFeatureSchema& schema,
                                 const std::string& id, int64_t image_ts, int label, Rng& rng) {
    clin::ClinicalRecord rec;
    rec.subject_id = id;
    const double jitter = rng.uniform(-cfg.ehr_jitter_hours, cfg.ehr_jitter_hours);
    rec.timestamp = image_ts + static_cast<int64_t>(std::llround(jitter * 3600.0));

    const double shift = class_shift(cfg.signal_mode, label) * cfg.signal_scale;
    int bin_i = 0, cat_i = 0, cont_i = 0;
    char buf[32];
    for (const auto& f : schema.features) {
        // value synthesis first, MCAR afterwards so the missingness stream is
        // independent of the values
        std::string value;
        switch (f.kind) {
            case clin::FeatureKind::binary: {
                const bool info = informative(bin_i, cfg.schema.n_binary, cfg.schema.informative_frac);
                const double p = info ? std::min(0.9, 0.25 + 0.22 * shift) : 0.35;
                value = rng.bernoulli(p) ? "1" : "0";
                ++bin_i;
                break;
            }
            case clin::FeatureKind::categorical: {
                const bool info =
                    informative(cat_i, cfg.schema.n_categorical, cfg.schema.informative_frac);
                const int vocab = static_cast<int>(f.categories.size());
                std::vector<double> w(vocab, 1.0);
                if (info) w[(cat_i + label) % vocab] += 2.0 * (1.0 + shift);
                double total = 0;
                for (double x : w) total += x;
                double u = rng.uniform(0, total);
                int pick = 0;
                for (int v = 0; v < vocab; ++v) {
                    u -= w[v];
                    if (u <= 0) {
                        pick = v;
                        break;
                    }
                }
                value = f.categories[pick];
                ++cat_i;
                break;
            }
            case clin::FeatureKind::continuous: {
                const bool info =
                    informative(cont_i, cfg.schema.n_continuous, cfg.schema.informative_frac);
                const double base = 80.0 + 7.0 * cont_i;
                const double sigma = 10.0;
                const double mean = base + (info ? 0.8 * sigma * shift : 0.0);
                std::snprintf(buf, sizeof(buf), "%.4f", rng.normal(mean, sigma));
                value = buf;
                ++cont_i;
                break;
            }
        }
        if (!rng.bernoulli(cfg.missing_rate)) rec.values[f.name] = value;
    }
    return rec;
}

OutcomeRecord make_outcome(const std::string& id, int label, Rng& rng) {
    OutcomeRecord o;
    o.subject_id = id;
    switch (label) {
        case 0:
            o.los_days = rng.uniform(0.05, 0.95);
            break;
        case 1:
            o.los_days = rng.uniform(1.1, 20.0);
            break;
        default:
            o.los_days = rng.uniform(0.3, 30.0);
            // always ICU or death so the label is stable under either reading
            // of the intubation flag
            o.icu_admitted = rng.bernoulli(0.75);
            o.died = o.icu_admitted ? rng.bernoulli(0.3) : true;
            o.intubated = rng.bernoulli(0.4);
            break;
    }
    return o;
}

}  // namespace

std::vector<OutcomeRecord> load_outcomes_csv(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || trim(line) != "subject_id,los_days,icu,died,intubated")
        throw DataError("bad outcomes CSV header: " + path);
    std::vector<OutcomeRecord> out;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cols = split(line, ',');
        if (cols.size() != 5) throw DataError("bad outcomes row: " + line);
        OutcomeRecord o;
        o.subject_id = trim(cols[0]);
        o.los_days = std::stod(cols[1]);
        o.icu_admitted = cols[2] == "1";
        o.died = cols[3] == "1";
        o.intubated = cols[4] == "1";
        out.push_back(std::move(o));
    }
    return out;
}

void save_outcomes_csv(const std::string& path, const std::vector<OutcomeRecord>& outcomes) {
    std::ostringstream out;
    out << "subject_id,los_days,icu,died,intubated\n";
    char buf[32];
    for (const auto& o : outcomes) {
        std::snprintf(buf, sizeof(buf), "%.6f", o.los_days);
        out << o.subject_id << ',' << buf << ',' << (o.icu_admitted ? 1 : 0) << ','
            << (o.died ? 1 : 0) << ',' << (o.intubated ? 1 : 0) << '\n';
    }
    write_text_file(path, out.str());
}

void generate(const SynthConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    const auto schema = build_schema(cfg.schema);

    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "masks");

    const int64_t base_ts = parse_iso8601("2020-03-01T00:00:00");
    nlohmann::json manifest = nlohmann::json::array();
    std::vector<clin::ClinicalRecord> records;
    std::vector<OutcomeRecord> outcomes;
    std::vector<int> labels(cfg.n_subjects);

    for (int i = 0; i < cfg.n_subjects; ++i) {
        Rng rng(mix_seed(cfg.master_seed, static_cast<uint64_t>(i)));
        const std::string id = subject_name(i);

        double u = rng.uniform();
        int label = 0;
        for (int c = 0; c < 3; ++c) {
            u -= cfg.class_priors[c];
            if (u <= 0) {
                label = c;
                break;
            }
            label = c;  // fp rounding: last class absorbs the remainder
        }
        labels[i] = label;

        const int64_t image_ts = base_ts + static_cast<int64_t>(i) * 3600;
        const int quadrant = cfg.quadrant_signal ? static_cast<int>(rng.uniform_int(4)) : -1;

        img::RawImage image = make_background(cfg.image_size, rng);
        img::RawImage mask =
            cfg.quadrant_signal ? make_full_mask(cfg.image_size) : make_lung_mask(cfg.image_size);
        add_patterns(image, mask, quadrant, pattern_for(cfg.signal_mode, label), rng);

        const std::string image_rel = "images/" + id + ".pgm";
        const std::string mask_rel = "masks/" + id + ".pgm";
        img::write_pgm((fs::path(out_dir) / image_rel).string(), image);
        img::write_pgm((fs::path(out_dir) / mask_rel).string(), mask);

        nlohmann::json entry = {{"subject_id", id},
                                {"image_path", image_rel},
                                {"mask_path", mask_rel},
                                {"image_timestamp", format_iso8601(image_ts)}};
        if (quadrant >= 0) entry["signal_quadrant"] = quadrant;
        manifest.push_back(entry);

        records.push_back(make_record(cfg, schema, id, image_ts, label, rng));
        outcomes.push_back(make_outcome(id, label, rng));
        if (derive_risk_label(outcomes.back(), cfg.include_intubation) != label)
            throw std::logic_error("synth: outcome inconsistent with drawn label");
    }

    // Stratified 60/20/20 split. Largest-remainder apportionment pins the
    // global totals exactly while every class stays within one subject of
    // its proportional share.
    Rng split_rng(mix_seed(cfg.master_seed, 0x5011f7a1ULL));
    std::vector<std::string> split_of(cfg.n_subjects);
    std::array<std::vector<int>, 3> members;
    for (int i = 0; i < cfg.n_subjects; ++i) members[labels[i]].push_back(i);
    for (auto& m : members) split_rng.shuffle(m);

    auto apportion = [](const std::array<long, 3>& avail, double frac, long target) {
        std::array<long, 3> out;
        std::array<double, 3> remainder;
        long assigned = 0;
        for (int c = 0; c < 3; ++c) {
            const double quota = frac * static_cast<double>(avail[c]);
            out[c] = static_cast<long>(std::floor(quota));
            remainder[c] = quota - static_cast<double>(out[c]);
            assigned += out[c];
        }
        while (assigned < target) {
            int best = 0;
            for (int c = 1; c < 3; ++c)
                if (remainder[c] > remainder[best]) best = c;
            ++out[best];
            remainder[best] = -1;
            ++assigned;
        }
        return out;
    };

    const std::array<long, 3> counts_by_class = {static_cast<long>(members[0].size()),
                                                 static_cast<long>(members[1].size()),
                                                 static_cast<long>(members[2].size())};
    const long n_train_total = std::lround(0.6 * cfg.n_subjects);
    const long n_val_total = std::lround(0.2 * cfg.n_subjects);
    const auto train_of = apportion(counts_by_class, 0.6, n_train_total);
    const auto val_of = apportion(counts_by_class, 0.2, n_val_total);
    for (int c = 0; c < 3; ++c) {
        for (size_t j = 0; j < members[c].size(); ++j) {
            const long jl = static_cast<long>(j);
            split_of[members[c][j]] = jl < train_of[c]               ? "train"
                                      : jl < train_of[c] + val_of[c] ? "val"
                                                                     : "test";
        }
    }

    write_text_file((fs::path(out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
    schema.save((fs::path(out_dir) / "schema.tsv").string());
    clin::save_clinical_csv((fs::path(out_dir) / "clinical.csv").string(), records, schema);
    save_outcomes_csv((fs::path(out_dir) / "outcomes.csv").string(), outcomes);
    std::ostringstream split_csv;
    split_csv << "subject_id,split\n";
    for (int i = 0; i < cfg.n_subjects; ++i)
        split_csv << subject_name(i) << ',' << split_of[i] << '\n';
    write_text_file((fs::path(out_dir) / "split.csv").string(), split_csv.str());
}

}  // namespace fuselearn::synth
