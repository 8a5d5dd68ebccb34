#include <z2ent/pipelines.hpp>

#include <CLI11.hpp>

#include <iostream>

using namespace z2ent;

int main(int argc, char** argv) {
    CLI::App app{"Entanglement of the Z2 lattice gauge theory on small tori"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir, archive;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<double> budget;
    app.add_option("-c,--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "random seed");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--budget-gb", budget, "memory budget in GB")->check(CLI::PositiveNumber);
    app.add_flag("--version", [](std::int64_t) {
        std::cout << "z2ent " << Z2ENT_VERSION << "\n";
        std::exit(0);
    }, "print the version and exit");

    struct Cmd {
        const char* name;
        const char* help;
        int (*run)(const RunConfig&);
    };
    const Cmd cmds[] = {
        {"verify", "check the dual map and compare spectra against the Gauss-projected model", run_verify},
        {"ground-es", "ground-state entanglement spectra", run_ground_es},
        {"scan", "entanglement gap scan and critical coupling", run_scan},
        {"eh-fit", "variational entanglement Hamiltonian fit", run_eh_fit},
        {"quench", "quench dynamics of entanglement and level statistics", run_quench},
        {"scaling-fit", "scaling collapse of archived Schmidt spectra", run_scaling},
    };
    std::vector<CLI::App*> subs;
    for(auto& c : cmds) subs.push_back(app.add_subcommand(c.name, c.help));
    subs.back()->add_option("--archive", archive, "spectra.csv written by the quench subcommand");

    try {
        app.parse(argc, argv);
    } catch(const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch(const CLI::ParseError& e) {
        app.exit(e);
        return exit_code::usage;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        if(seed) cfg.seed = *seed;
        if(threads) cfg.threads = *threads;
        if(!out_dir.empty()) cfg.output = out_dir;
        if(budget) cfg.budget_gb = *budget;
        if(!archive.empty()) cfg.scaling.archive = archive;
        for(std::size_t k = 0; k < subs.size(); ++k)
            if(subs[k]->parsed()) {
                int code = cmds[k].run(cfg);
                if(code != exit_code::ok) std::cerr << "z2ent " << cmds[k].name << ": failed, see " << cfg.output << "/metadata.json\n";
                return code;
            }
    } catch(const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return exit_code::usage;
    } catch(const BudgetExceeded& e) {
        std::cerr << "memory budget exceeded: " << e.what() << "\n";
        return exit_code::budget;
    } catch(const NonConvergence& e) {
        std::cerr << "numerical failure: " << e.what() << " (residual " << e.residual << ")\n";
        return exit_code::numeric;
    } catch(const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return exit_code::usage;
    } catch(const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::numeric;
    }
    return exit_code::usage;
}
