#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fuselearn/common.hpp"
#include "fuselearn/serialize.hpp"

// Typed tabular preprocessing: statistics are fitted on training records only
// and then applied identically to every record anywhere in the pipeline.

namespace fuselearn::clin {

enum class FeatureKind { binary, categorical, continuous };

std::string kind_name(FeatureKind k);
FeatureKind kind_from_name(const std::string& s);

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    std::vector<std::string> categories;  // categorical only
};

struct TypedFeatureSchema {
    std::vector<FeatureSpec> features;

    void validate() const;

    /// Line-oriented text format: name<TAB>kind<TAB>cat1|cat2|...
    static TypedFeatureSchema load(const std::string& path);
    void save(const std::string& path) const;
};

struct ClinicalRecord {
    std::string subject_id;
    int64_t timestamp = 0;  // unix seconds
    // raw value per feature name; absent key or empty string = missing
    std::unordered_map<std::string, std::string> values;

    bool missing(const std::string& feature) const {
        auto it = values.find(feature);
        return it == values.end() || it->second.empty();
    }
};

struct ContinuousStats {
    double mean = 0, min = 0, max = 0;
};

struct RetainedFeature {
    FeatureSpec spec;
    int offset = 0;  // first slot in the encoded vector
    int width = 1;   // 1 for binary/continuous, |categories|+1 for categorical
    ContinuousStats stats;  // continuous only
};

class FittedPreprocessor {
public:
    /// Fit on training records: drop features missing in strictly more than
    /// `drop_threshold` of records, compute imputation/scaling statistics for
    /// the rest. Refitting on the same records gives an identical object.
    static FittedPreprocessor fit(const std::vector<ClinicalRecord>& training,
                                  const TypedFeatureSchema& schema, double drop_threshold = 0.40);

    /// Encode one record to exactly dim() values. Pure: no internal state is
    /// read or written beyond the fitted statistics.
    ///   binary      missing -> 0, present -> {0,1}
    ///   categorical missing/unseen -> the reserved unknown slot (one-hot)
    ///   continuous  missing -> train mean, then min-max scaled and clipped to [0,1]
    std::vector<double> transform(const ClinicalRecord& record) const;

    int dim() const { return dim_; }
    const std::vector<RetainedFeature>& retained() const { return retained_; }
    /// Number of raw-feature groups (each one-hot block moves as one unit).
    int group_count() const { return static_cast<int>(retained_.size()); }

    bool operator==(const FittedPreprocessor& other) const;

    void write(BinaryWriter& w) const;
    static FittedPreprocessor read(BinaryReader& r);

private:
    std::vector<RetainedFeature> retained_;
    int dim_ = 0;
};

/// Coordinate-wise mean of the transformed training records.
std::vector<double> mean_clinical_vector(const FittedPreprocessor& fitted,
                                         const std::vector<ClinicalRecord>& training);

/// Temporally closest record within 24 hours of the image timestamp; ties at
/// equal |dt| resolve to the earlier record. Returns nullopt when nothing
/// falls inside the window.
std::optional<ClinicalRecord> match_ehr_to_image(int64_t image_timestamp,
                                                 const std::vector<ClinicalRecord>& records);

/// CSV with header `subject_id,timestamp,<feature names...>`; empty cell =
/// missing. UTF-8, no quoting.
std::vector<ClinicalRecord> load_clinical_csv(const std::string& path,
                                              const TypedFeatureSchema& schema);
void save_clinical_csv(const std::string& path, const std::vector<ClinicalRecord>& records,
                       const TypedFeatureSchema& schema);

}  // namespace fuselearn::clin
