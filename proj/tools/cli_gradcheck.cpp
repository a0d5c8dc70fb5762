#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "cli_common.hpp"
#include "fuselearn/gradcheck.hpp"

namespace fuselearn::cli {

int cmd_gradcheck(int argc, char** argv) {
    CLI::App app{"finite-difference verification of every layer op and the full model"};
    int seeds = 20;
    double eps = 1e-5, tol = 1e-4;
    std::string inject_fault;
    app.add_option("--seeds", seeds, "random rounds per op");
    app.add_option("--eps", eps, "central-difference step");
    app.add_option("--tol", tol, "max relative error accepted");
    app.add_option("--inject-fault", inject_fault,
                   "test hook: sign-flip the named op's backward pass");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : kExitOk;
    }

    return guarded("gradcheck", [&]() {
        if (seeds < 1) throw ConfigError("--seeds must be >= 1");
        ad::set_backward_fault(inject_fault);
        const auto results = check::run_gradcheck_suite(seeds, eps, tol);
        ad::set_backward_fault("");

        bool all_pass = true;
        std::printf("%-24s %-14s %s\n", "op", "max_rel_err", "status");
        for (const auto& r : results) {
            std::printf("%-24s %-14.3e %s\n", r.op.c_str(), r.max_rel_err,
                        r.pass ? "PASS" : "FAIL");
            all_pass = all_pass && r.pass;
        }
        if (!all_pass) {
            std::cerr << "gradcheck: at least one op failed\n";
            return 1;
        }
        return kExitOk;
    });
}

}  // namespace fuselearn::cli
