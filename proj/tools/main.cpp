#include <cstring>
#include <iostream>

#include "cli_common.hpp"

namespace {

void usage() {
    std::cout << "fuselearn — multimodal (image + tabular) fusion learning toolkit\n\n"
                 "usage: fuselearn <command> [options]\n\n"
                 "commands:\n"
                 "  synth      generate a deterministic synthetic dataset\n"
                 "  train      train a fusion / image-only / feature-only model\n"
                 "  eval       evaluate checkpoints under a modality mode\n"
                 "  baseline   fit + evaluate a clinical-only reference model (rf/qda/ridge)\n"
                 "  compare    paired DeLong + McNemar tests between prediction files\n"
                 "  gradcam    export saliency heatmap overlays\n"
                 "  gradcheck  finite-difference verification suite\n\n"
                 "run 'fuselearn <command> --help' for command options.\n";
}

}  // namespace

int main(int argc, char** argv) {
    using namespace fuselearn::cli;
    if (argc < 2) {
        usage();
        return kExitConfig;
    }
    const std::string cmd = argv[1];
    if (cmd == "-h" || cmd == "--help" || cmd == "help") {
        usage();
        return kExitOk;
    }
    // shift argv so each subcommand parses its own options
    if (cmd == "synth") return cmd_synth(argc - 1, argv + 1);
    if (cmd == "train") return cmd_train(argc - 1, argv + 1);
    if (cmd == "eval") return cmd_eval(argc - 1, argv + 1);
    if (cmd == "baseline") return cmd_baseline(argc - 1, argv + 1);
    if (cmd == "compare") return cmd_compare(argc - 1, argv + 1);
    if (cmd == "gradcam") return cmd_gradcam(argc - 1, argv + 1);
    if (cmd == "gradcheck") return cmd_gradcheck(argc - 1, argv + 1);
    std::cerr << "unknown command: " << cmd << "\n";
    usage();
    return kExitConfig;
}
