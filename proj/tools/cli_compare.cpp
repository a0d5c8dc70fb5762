#include <algorithm>
#include <iostream>
#include <set>

#include "CLI11.hpp"

#include "cli_common.hpp"
#include "fuselearn/stats.hpp"

namespace fuselearn::cli {

int cmd_compare(int argc, char** argv) {
    CLI::App app{"paired significance tests between two prediction files"};
    std::string path_a, path_b, out_path;
    app.add_option("--a", path_a, "first prediction CSV")->required();
    app.add_option("--b", path_b, "second prediction CSV")->required();
    app.add_option("--out", out_path, "comparison JSON output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : kExitOk;
    }

    return guarded("compare", [&]() {
        auto a = stats::load_predictions_csv(path_a);
        auto b = stats::load_predictions_csv(path_b);

        std::set<std::string> ids_a, ids_b;
        for (const auto& p : a.items) ids_a.insert(p.id);
        for (const auto& p : b.items) ids_b.insert(p.id);
        if (ids_a != ids_b) {
            std::vector<std::string> only_a, only_b;
            std::set_difference(ids_a.begin(), ids_a.end(), ids_b.begin(), ids_b.end(),
                                std::back_inserter(only_a));
            std::set_difference(ids_b.begin(), ids_b.end(), ids_a.begin(), ids_a.end(),
                                std::back_inserter(only_b));
            std::string msg = "subject sets differ;";
            msg += " only in A (" + std::to_string(only_a.size()) + "):";
            for (size_t i = 0; i < only_a.size() && i < 10; ++i) msg += " " + only_a[i];
            msg += "; only in B (" + std::to_string(only_b.size()) + "):";
            for (size_t i = 0; i < only_b.size() && i < 10; ++i) msg += " " + only_b[i];
            throw MismatchError(msg);
        }

        auto by_id = [](stats::PredictionSet& s) {
            std::sort(s.items.begin(), s.items.end(),
                      [](const auto& x, const auto& y) { return x.id < y.id; });
        };
        by_id(a);
        by_id(b);

        const auto delong = stats::delong_multiclass(a, b);
        std::vector<bool> correct_a, correct_b;
        for (size_t i = 0; i < a.items.size(); ++i) {
            correct_a.push_back(a.items[i].pred_label == a.items[i].true_label);
            correct_b.push_back(b.items[i].pred_label == b.items[i].true_label);
        }
        const auto mcnemar = stats::mcnemar_test(correct_a, correct_b);
        const auto rep_a = stats::compute_metrics(a);
        const auto rep_b = stats::compute_metrics(b);

        nlohmann::json j;
        j["n_subjects"] = a.items.size();
        nlohmann::json per = nlohmann::json::array();
        for (const auto& c : delong.per_class)
            per.push_back({{"test", "delong"},
                           {"metric", c.metric},
                           {"auc_a", c.value_a},
                           {"auc_b", c.value_b},
                           {"statistic", c.statistic},
                           {"p", c.p},
                           {"significant", c.significant}});
        j["delong"] = {{"per_class", per},
                       {"combined_significant", delong.combined_significant}};
        j["mcnemar"] = {{"test", "mcnemar"},
                        {"b", mcnemar.b},
                        {"c", mcnemar.c},
                        {"statistic", mcnemar.statistic},
                        {"p", mcnemar.p},
                        {"exact", mcnemar.exact},
                        {"significant", mcnemar.p < 0.05}};
        // McNemar is a test of paired correctness; the per-metric deltas are
        // reported alongside it rather than tested individually.
        j["metric_deltas"] = {
            {"accuracy", {{"a", rep_a.accuracy}, {"b", rep_b.accuracy}}},
            {"macro_precision", {{"a", rep_a.macro_precision}, {"b", rep_b.macro_precision}}},
            {"macro_recall", {{"a", rep_a.macro_recall}, {"b", rep_b.macro_recall}}},
            {"macro_f1", {{"a", rep_a.macro_f1}, {"b", rep_b.macro_f1}}},
            {"macro_auc", {{"a", rep_a.macro_auc}, {"b", rep_b.macro_auc}}}};

        write_text_file(out_path, j.dump(2) + "\n");
        std::cout << "DeLong combined " << (delong.combined_significant ? "significant" : "n.s.")
                  << "; McNemar p = " << mcnemar.p << "\n";
        return kExitOk;
    });
}

}  // namespace fuselearn::cli
