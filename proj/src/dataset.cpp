#include "fuselearn/dataset.hpp"

#include <filesystem>
#include <map>
#include <sstream>

#include "json.hpp"

#include "fuselearn/image_io.hpp"
#include "fuselearn/synth.hpp"

namespace fuselearn::data {

namespace fs = std::filesystem;

std::vector<size_t> Dataset::split_indices(const std::string& split) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < subjects.size(); ++i)
        if (subjects[i].split == split) out.push_back(i);
    return out;
}

const Subject* Dataset::find(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.id == id) return &s;
    return nullptr;
}

Dataset load_dataset(const std::string& dir, bool include_intubation) {
    Dataset ds;
    ds.root = dir;
    std::vector<std::string> errors;

    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    if (!file_exists(manifest_path)) throw DataError("missing manifest: " + manifest_path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest parse error: " + std::string(e.what()));
    }
    if (!manifest.is_array()) throw DataError("manifest must be a JSON array");

    ds.schema = clin::TypedFeatureSchema::load((fs::path(dir) / "schema.tsv").string());
    const auto records =
        clin::load_clinical_csv((fs::path(dir) / "clinical.csv").string(), ds.schema);
    const auto outcomes = synth::load_outcomes_csv((fs::path(dir) / "outcomes.csv").string());

    std::map<std::string, std::vector<clin::ClinicalRecord>> records_by_subject;
    for (const auto& r : records) records_by_subject[r.subject_id].push_back(r);
    std::map<std::string, synth::OutcomeRecord> outcome_by_subject;
    for (const auto& o : outcomes) outcome_by_subject[o.subject_id] = o;

    std::map<std::string, std::string> split_by_subject;
    {
        std::istringstream in(read_text_file((fs::path(dir) / "split.csv").string()));
        std::string line;
        if (!std::getline(in, line) || trim(line) != "subject_id,split")
            throw DataError("bad split.csv header");
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            auto cols = split(line, ',');
            if (cols.size() != 2) throw DataError("bad split row: " + line);
            const std::string sp = trim(cols[1]);
            if (sp != "train" && sp != "val" && sp != "test")
                throw DataError("bad split value '" + sp + "' for " + cols[0]);
            split_by_subject[trim(cols[0])] = sp;
        }
    }

    for (const auto& entry : manifest) {
        Subject s;
        try {
            s.id = entry.at("subject_id").get<std::string>();
            s.image_path = (fs::path(dir) / entry.at("image_path").get<std::string>()).string();
            s.mask_path = (fs::path(dir) / entry.at("mask_path").get<std::string>()).string();
            s.image_timestamp = parse_iso8601(entry.at("image_timestamp").get<std::string>());
            if (entry.contains("signal_quadrant")) s.signal_quadrant = entry["signal_quadrant"];
        } catch (const std::exception& e) {
            errors.push_back("manifest entry invalid: " + std::string(e.what()));
            continue;
        }
        if (!file_exists(s.image_path)) {
            errors.push_back(s.id + ": image file not found: " + s.image_path);
            continue;
        }
        if (!file_exists(s.mask_path)) {
            errors.push_back(s.id + ": mask file not found: " + s.mask_path);
            continue;
        }
        auto oit = outcome_by_subject.find(s.id);
        if (oit == outcome_by_subject.end()) {
            errors.push_back(s.id + ": no outcome record");
            continue;
        }
        s.label = synth::derive_risk_label(oit->second, include_intubation);
        auto spit = split_by_subject.find(s.id);
        if (spit == split_by_subject.end()) {
            errors.push_back(s.id + ": no split assignment");
            continue;
        }
        s.split = spit->second;

        auto rit = records_by_subject.find(s.id);
        if (rit == records_by_subject.end()) {
            ds.exclusions.push_back(s.id + ": no clinical records");
            continue;
        }
        auto matched = clin::match_ehr_to_image(s.image_timestamp, rit->second);
        if (!matched) {
            ds.exclusions.push_back(s.id + ": closest EHR record is outside the 24h window");
            continue;
        }
        s.record = std::move(*matched);
        ds.subjects.push_back(std::move(s));
    }

    if (!errors.empty()) {
        std::string report = "dataset validation failed (" + std::to_string(errors.size()) +
                             " problems):";
        for (const auto& e : errors) report += "\n  - " + e;
        throw DataError(report);
    }
    if (ds.subjects.empty()) throw DataError("dataset has no usable subjects");
    return ds;
}

img::PreprocessedImage load_subject_image(const Subject& subject, int S, double crop_margin) {
    const img::RawImage raw = img::read_gray(subject.image_path);
    const img::LungMask mask = img::read_mask(subject.mask_path);
    return img::preprocess(raw, mask, S, subject.image_path, crop_margin);
}

}  // namespace fuselearn::data
