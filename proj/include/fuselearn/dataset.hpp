#pragma once

#include <string>
#include <vector>

#include "fuselearn/clinical.hpp"
#include "fuselearn/image.hpp"

// Validated on-disk dataset handle: manifest-listed images and masks, the
// temporally matched clinical record per subject, the outcome-derived label,
// and the split assignment. Generated and externally supplied datasets load
// through the same path.

namespace fuselearn::data {

struct Subject {
    std::string id;
    std::string image_path;  // resolved (joined with the dataset directory)
    std::string mask_path;
    int64_t image_timestamp = 0;
    clin::ClinicalRecord record;  // matched EHR record
    int label = 0;
    std::string split;
    int signal_quadrant = -1;  // set only by quadrant-signal synthetic data
};

struct Dataset {
    std::string root;
    clin::TypedFeatureSchema schema;
    std::vector<Subject> subjects;
    std::vector<std::string> exclusions;  // subjects skipped, with reasons

    std::vector<size_t> split_indices(const std::string& split) const;
    const Subject* find(const std::string& id) const;
};

/// Load and validate a dataset directory (manifest.json, schema.tsv,
/// clinical.csv, outcomes.csv, split.csv). Missing files or schema violations
/// raise DataError with an itemized report; subjects whose closest EHR record
/// is more than 24 hours away are excluded with a logged reason.
Dataset load_dataset(const std::string& dir, bool include_intubation = true);

/// Load + preprocess one subject's image to 3*S*S planes.
img::PreprocessedImage load_subject_image(const Subject& subject, int S,
                                          double crop_margin = 0.05);

}  // namespace fuselearn::data
