#include "fuselearn/clinical.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace fuselearn::clin {

std::string kind_name(FeatureKind k) {
    switch (k) {
        case FeatureKind::binary: return "binary";
        case FeatureKind::categorical: return "categorical";
        case FeatureKind::continuous: return "continuous";
    }
    return "?";
}

FeatureKind kind_from_name(const std::string& s) {
    if (s == "binary") return FeatureKind::binary;
    if (s == "categorical") return FeatureKind::categorical;
    if (s == "continuous") return FeatureKind::continuous;
    throw DataError("unknown feature kind: '" + s + "'");
}

void TypedFeatureSchema::validate() const {
    std::set<std::string> seen;
    for (const auto& f : features) {
        if (f.name.empty()) throw DataError("schema: empty feature name");
        if (!seen.insert(f.name).second) throw DataError("schema: duplicate feature '" + f.name + "'");
        if (f.kind == FeatureKind::categorical && f.categories.empty())
            throw DataError("schema: categorical feature '" + f.name + "' has empty vocabulary");
    }
}

TypedFeatureSchema TypedFeatureSchema::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open schema: " + path);
    TypedFeatureSchema schema;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cols = split(line, '\t');
        if (cols.size() < 2) throw DataError("schema: bad line '" + line + "'");
        FeatureSpec f;
        f.name = trim(cols[0]);
        f.kind = kind_from_name(trim(cols[1]));
        if (f.kind == FeatureKind::categorical) {
            if (cols.size() < 3) throw DataError("schema: categorical '" + f.name + "' missing vocabulary");
            for (const auto& c : split(cols[2], '|'))
                if (!trim(c).empty()) f.categories.push_back(trim(c));
        }
        schema.features.push_back(std::move(f));
    }
    schema.validate();
    return schema;
}

void TypedFeatureSchema::save(const std::string& path) const {
    validate();
    std::ostringstream out;
    for (const auto& f : features) {
        out << f.name << '\t' << kind_name(f.kind);
        if (f.kind == FeatureKind::categorical) {
            out << '\t';
            for (size_t i = 0; i < f.categories.size(); ++i) {
                if (i) out << '|';
                out << f.categories[i];
            }
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

namespace {
double parse_number(const std::string& name, const std::string& raw) {
    char* end = nullptr;
    double v = std::strtod(raw.c_str(), &end);
    if (end == raw.c_str() || !std::isfinite(v))
        throw DataError("feature '" + name + "': non-numeric value '" + raw + "'");
    return v;
}

bool parse_binary(const std::string& raw) {
    std::string v = lower(trim(raw));
    return v == "1" || v == "true" || v == "yes";
}
}  // namespace

FittedPreprocessor FittedPreprocessor::fit(const std::vector<ClinicalRecord>& training,
                                           const TypedFeatureSchema& schema,
                                           double drop_threshold) {
    schema.validate();
    if (training.empty()) throw DataError("fit: no training records");
    if (!(drop_threshold > 0.0 && drop_threshold < 1.0))
        throw std::invalid_argument("fit: drop_threshold must be in (0,1)");

    FittedPreprocessor fp;
    const double n = static_cast<double>(training.size());
    for (const auto& spec : schema.features) {
        size_t miss = 0;
        for (const auto& rec : training) miss += rec.missing(spec.name) ? 1 : 0;
        if (static_cast<double>(miss) / n > drop_threshold) continue;  // strictly greater: dropped

        RetainedFeature rf;
        rf.spec = spec;
        rf.offset = fp.dim_;
        switch (spec.kind) {
            case FeatureKind::binary:
                rf.width = 1;
                break;
            case FeatureKind::categorical:
                rf.width = static_cast<int>(spec.categories.size()) + 1;  // + unknown slot
                break;
            case FeatureKind::continuous: {
                rf.width = 1;
                double sum = 0, mn = 0, mx = 0;
                size_t count = 0;
                for (const auto& rec : training) {
                    if (rec.missing(spec.name)) continue;
                    const double v = parse_number(spec.name, rec.values.at(spec.name));
                    if (count == 0) {
                        mn = mx = v;
                    } else {
                        mn = std::min(mn, v);
                        mx = std::max(mx, v);
                    }
                    sum += v;
                    ++count;
                }
                if (count == 0)
                    throw DataError("continuous feature '" + spec.name +
                                    "' has no observed training values");
                rf.stats = {sum / static_cast<double>(count), mn, mx};
                break;
            }
        }
        fp.dim_ += rf.width;
        fp.retained_.push_back(std::move(rf));
    }
    return fp;
}

std::vector<double> FittedPreprocessor::transform(const ClinicalRecord& record) const {
    std::vector<double> out(static_cast<size_t>(dim_), 0.0);
    for (const auto& rf : retained_) {
        const std::string& name = rf.spec.name;
        const bool miss = record.missing(name);
        switch (rf.spec.kind) {
            case FeatureKind::binary:
                out[rf.offset] = (!miss && parse_binary(record.values.at(name))) ? 1.0 : 0.0;
                break;
            case FeatureKind::categorical: {
                int slot = rf.width - 1;  // unknown slot
                if (!miss) {
                    const std::string& v = record.values.at(name);
                    for (size_t i = 0; i < rf.spec.categories.size(); ++i) {
                        if (rf.spec.categories[i] == v) {
                            slot = static_cast<int>(i);
                            break;
                        }
                    }
                }
                out[rf.offset + slot] = 1.0;
                break;
            }
            case FeatureKind::continuous: {
                const double range = rf.stats.max - rf.stats.min;
                double v;
                if (range <= 0.0) {
                    v = 0.5;  // degenerate training range
                } else {
                    const double x =
                        miss ? rf.stats.mean : parse_number(name, record.values.at(name));
                    v = (x - rf.stats.min) / range;
                    v = std::min(1.0, std::max(0.0, v));
                }
                out[rf.offset] = v;
                break;
            }
        }
    }
    return out;
}

bool FittedPreprocessor::operator==(const FittedPreprocessor& other) const {
    if (dim_ != other.dim_ || retained_.size() != other.retained_.size()) return false;
    for (size_t i = 0; i < retained_.size(); ++i) {
        const auto& a = retained_[i];
        const auto& b = other.retained_[i];
        if (a.spec.name != b.spec.name || a.spec.kind != b.spec.kind ||
            a.spec.categories != b.spec.categories || a.offset != b.offset || a.width != b.width)
            return false;
        if (a.spec.kind == FeatureKind::continuous &&
            (a.stats.mean != b.stats.mean || a.stats.min != b.stats.min ||
             a.stats.max != b.stats.max))
            return false;
    }
    return true;
}

void FittedPreprocessor::write(BinaryWriter& w) const {
    w.u32(static_cast<uint32_t>(retained_.size()));
    for (const auto& rf : retained_) {
        w.str(rf.spec.name);
        w.u8(static_cast<uint8_t>(rf.spec.kind));
        w.u32(static_cast<uint32_t>(rf.spec.categories.size()));
        for (const auto& c : rf.spec.categories) w.str(c);
        w.u32(static_cast<uint32_t>(rf.offset));
        w.u32(static_cast<uint32_t>(rf.width));
        w.f64(rf.stats.mean);
        w.f64(rf.stats.min);
        w.f64(rf.stats.max);
    }
    w.u32(static_cast<uint32_t>(dim_));
}

FittedPreprocessor FittedPreprocessor::read(BinaryReader& r) {
    FittedPreprocessor fp;
    const uint32_t n = r.u32();
    for (uint32_t i = 0; i < n; ++i) {
        RetainedFeature rf;
        rf.spec.name = r.str();
        rf.spec.kind = static_cast<FeatureKind>(r.u8());
        const uint32_t nc = r.u32();
        for (uint32_t j = 0; j < nc; ++j) rf.spec.categories.push_back(r.str());
        rf.offset = static_cast<int>(r.u32());
        rf.width = static_cast<int>(r.u32());
        rf.stats.mean = r.f64();
        rf.stats.min = r.f64();
        rf.stats.max = r.f64();
        fp.retained_.push_back(std::move(rf));
    }
    fp.dim_ = static_cast<int>(r.u32());
    return fp;
}

std::vector<double> mean_clinical_vector(const FittedPreprocessor& fitted,
                                         const std::vector<ClinicalRecord>& training) {
    if (training.empty()) throw DataError("mean_clinical_vector: no records");
    std::vector<double> mean(static_cast<size_t>(fitted.dim()), 0.0);
    for (const auto& rec : training) {
        const auto v = fitted.transform(rec);
        for (size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
    }
    for (auto& x : mean) x /= static_cast<double>(training.size());
    return mean;
}

std::optional<ClinicalRecord> match_ehr_to_image(int64_t image_timestamp,
                                                 const std::vector<ClinicalRecord>& records) {
    constexpr int64_t kWindow = 24 * 3600;
    const ClinicalRecord* best = nullptr;
    int64_t best_abs = 0;
    for (const auto& rec : records) {
        const int64_t dt = rec.timestamp - image_timestamp;
        const int64_t a = std::llabs(dt);
        if (a > kWindow) continue;
        if (!best || a < best_abs ||
            (a == best_abs && rec.timestamp < best->timestamp)) {  // earlier record wins ties
            best = &rec;
            best_abs = a;
        }
    }
    if (!best) return std::nullopt;
    return *best;
}

std::vector<ClinicalRecord> load_clinical_csv(const std::string& path,
                                              const TypedFeatureSchema& schema) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open clinical CSV: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty clinical CSV: " + path);
    auto header = split(trim(line), ',');
    if (header.size() < 2 || header[0] != "subject_id" || header[1] != "timestamp")
        throw DataError("clinical CSV must start with subject_id,timestamp: " + path);
    std::vector<ClinicalRecord> out;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cols = split(line, ',');
        if (cols.size() != header.size())
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " columns, got " +
                            std::to_string(cols.size()));
        ClinicalRecord rec;
        rec.subject_id = trim(cols[0]);
        rec.timestamp = parse_iso8601(trim(cols[1]));
        for (size_t i = 2; i < cols.size(); ++i) {
            const std::string v = trim(cols[i]);
            if (!v.empty()) rec.values[header[i]] = v;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void save_clinical_csv(const std::string& path, const std::vector<ClinicalRecord>& records,
                       const TypedFeatureSchema& schema) {
    std::ostringstream out;
    out << "subject_id,timestamp";
    for (const auto& f : schema.features) out << ',' << f.name;
    out << '\n';
    for (const auto& rec : records) {
        out << rec.subject_id << ',' << format_iso8601(rec.timestamp);
        for (const auto& f : schema.features) {
            auto it = rec.values.find(f.name);
            out << ',' << (it == rec.values.end() ? "" : it->second);
        }
        out << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace fuselearn::clin
