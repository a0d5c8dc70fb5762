#include "cli_common.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fuselearn::cli {

namespace fs = std::filesystem;

int guarded(const std::string& command, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << command << ": config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << command << ": data error: " << e.what() << "\n";
        return kExitData;
    } catch (const PrereqError& e) {
        std::cerr << command << ": " << e.what() << "\n";
        return kExitPrereq;
    } catch (const MismatchError& e) {
        std::cerr << command << ": " << e.what() << "\n";
        return kExitMismatch;
    } catch (const std::exception& e) {
        std::cerr << command << ": " << e.what() << "\n";
        return 1;
    }
}

uint64_t default_seed() {
    const char* env = std::getenv("FUSELEARN_SEED");
    if (!env || !*env) return 0;
    return std::strtoull(env, nullptr, 10);
}

void write_config_snapshot(const std::string& out_dir, const nlohmann::json& resolved) {
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "resolved_config.json").string(), resolved.dump(2) + "\n");
}

nlohmann::json load_config_file(const std::string& path) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& raw : split(read_text_file(path), '\n')) {
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config file " + path + ": expected key=value, got '" + line + "'");
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

PreparedData prepare_subjects(const data::Dataset& ds, const std::vector<size_t>& indices, int S,
                              bool want_images, const clin::FittedPreprocessor* preprocessor,
                              double crop_margin) {
    PreparedData out;
    for (size_t idx : indices) {
        const auto& s = ds.subjects[idx];
        out.ids.push_back(s.id);
        out.labels.push_back(s.label);
        out.quadrants.push_back(s.signal_quadrant);
        if (want_images)
            out.images.push_back(data::load_subject_image(s, S, crop_margin).planes);
        if (preprocessor) out.clinical.push_back(preprocessor->transform(s.record));
    }
    return out;
}

}  // namespace fuselearn::cli
