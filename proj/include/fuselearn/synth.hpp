#pragma once

#include <array>
#include <string>
#include <vector>

#include "fuselearn/clinical.hpp"
#include "fuselearn/common.hpp"

// Deterministic multimodal synthetic cohorts: images with class-dependent
// elliptical opacity patterns inside lung-shaped masks, class-conditional
// clinical features with MCAR missingness, and outcome records the risk
// labels derive from. Per-subject RNG streams make generation order-free.

namespace fuselearn::synth {

enum class SignalMode { image_dominant, clinical_dominant, complementary };

SignalMode signal_mode_from_name(const std::string& s);
std::string signal_mode_name(SignalMode m);

struct SchemaShape {
    int n_binary = 8;
    int n_categorical = 4;
    int n_continuous = 12;
    double informative_frac = 0.5;
};

struct SynthConfig {
    int n_subjects = 1200;
    int image_size = 64;
    std::array<double, 3> class_priors = {0.287, 0.400, 0.313};
    SignalMode signal_mode = SignalMode::complementary;
    SchemaShape schema;
    double missing_rate = 0.15;      // MCAR, applied per feature
    double signal_scale = 1.0;       // multiplies the class-conditional clinical shift
    double ehr_jitter_hours = 6.0;   // EHR timestamp = image timestamp + U(-j, +j)
    bool quadrant_signal = false;    // confine each subject's image signal to one
                                     // recorded quadrant (full-frame masks)
    bool include_intubation = true;  // counts intubation as a high-risk outcome
    uint64_t master_seed = 0;

    void validate() const;
};

struct OutcomeRecord {
    std::string subject_id;
    double los_days = 0;
    bool icu_admitted = false;
    bool died = false;
    bool intubated = false;
};

/// Risk class from an outcome record: high on death/ICU (optionally
/// intubation), else low when the stay was under one day, else intermediate.
int derive_risk_label(const OutcomeRecord& outcome, bool include_intubation);

/// Writes manifest.json, schema.tsv, clinical.csv, outcomes.csv, split.csv,
/// and the images/ + masks/ trees under `out_dir`. Same config + seed gives a
/// byte-identical tree.
void generate(const SynthConfig& cfg, const std::string& out_dir);

clin::TypedFeatureSchema build_schema(const SchemaShape& shape);

std::vector<OutcomeRecord> load_outcomes_csv(const std::string& path);
void save_outcomes_csv(const std::string& path, const std::vector<OutcomeRecord>& outcomes);

}  // namespace fuselearn::synth
