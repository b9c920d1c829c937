#include "ncarve/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

struct GlobalOpts {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir;
};

ncarve::PipelineConfig resolve_config(const GlobalOpts& g,
                                      const std::vector<std::string>& overrides) {
    ncarve::PipelineConfig c;
    if (!g.config_path.empty()) c = ncarve::load_config(g.config_path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        }
        ncarve::apply_config_entry(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed_given) {
        c.seed = g.seed;
        c.seed_set = true;
    }
    if (!g.out_dir.empty()) c.out_dir = g.out_dir;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"normal-map driven mesh carving pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    std::vector<std::string> overrides;
    app.add_option("--config", g.config_path, "key = value config file")
            ->envname("NCARVE_CONFIG");
    auto* seed_opt =
            app.add_option("--seed", g.seed, "random seed (mandatory unless set in config)")
                    ->envname("NCARVE_SEED");
    app.add_option("--out", g.out_dir, "output directory")->envname("NCARVE_OUT");
    app.add_option("--set", overrides, "override a config entry (key=value), repeatable");

    std::string front_path, back_path, mesh_path, reference_path;

    auto* synth = app.add_subcommand("synth-data", "generate the synthetic training set");
    auto* train = app.add_subcommand("train", "train the toy denoiser on the cached dataset");
    auto* generate = app.add_subcommand("generate", "sample dual normal maps from the model");
    auto* carve_cmd = app.add_subcommand("carve", "deform the proxy to match front/back maps");
    carve_cmd->add_option("--front", front_path, "front normal map (.nmap)")->required();
    carve_cmd->add_option("--back", back_path, "back normal map (.nmap)")->required();
    auto* refine = app.add_subcommand("refine", "resample multi-view renders and re-carve");
    refine->add_option("--mesh", mesh_path, "carved mesh (.obj)")->required();
    auto* guided = app.add_subcommand("guided", "complete a dual pair from a known front map");
    guided->add_option("--front", front_path, "front normal map (.nmap)")->required();
    auto* render = app.add_subcommand("render", "render the view ring of a mesh");
    render->add_option("--mesh", mesh_path, "mesh to render (.obj)")->required();
    auto* eval_cmd = app.add_subcommand("eval", "silhouette IoU / normal error report");
    eval_cmd->add_option("--mesh", mesh_path, "mesh under test (.obj)")->required();
    eval_cmd->add_option("--ref", reference_path, "reference mesh (.obj) or render directory")
            ->required();
    auto* e2e = app.add_subcommand("e2e", "dataset -> train -> generate -> carve -> refine -> eval");

    CLI11_PARSE(app, argc, argv);
    g.seed_given = seed_opt->count() > 0;

    try {
        const ncarve::PipelineConfig config = resolve_config(g, overrides);
        if (synth->parsed()) {
            std::cout << "dataset written to " << ncarve::cmd_synth_data(config) << "\n";
        } else if (train->parsed()) {
            const auto curve = ncarve::cmd_train(config);
            std::printf("trained %zu epochs, loss %.6f -> %.6f\n", curve.size(),
                        curve.empty() ? 0.0 : curve.front(), curve.empty() ? 0.0 : curve.back());
        } else if (generate->parsed()) {
            const auto out = ncarve::cmd_generate(config);
            std::cout << "wrote " << out.front_path << " and " << out.back_path << "\n";
        } else if (carve_cmd->parsed()) {
            const auto out = ncarve::cmd_carve(config, front_path, back_path);
            std::cout << "wrote " << out.obj_path << "\n";
        } else if (refine->parsed()) {
            const auto out = ncarve::cmd_refine(config, mesh_path);
            std::cout << "wrote " << out.obj_path << "\n";
        } else if (guided->parsed()) {
            const auto out = ncarve::cmd_guided(config, front_path);
            std::cout << "wrote " << out.front_path << " and " << out.back_path << "\n";
        } else if (render->parsed()) {
            const auto paths = ncarve::cmd_render(config, mesh_path);
            std::cout << "wrote " << paths.size() << " views to " << config.out_dir << "\n";
        } else if (eval_cmd->parsed()) {
            const auto report = ncarve::cmd_eval(config, mesh_path, reference_path);
            std::cout << report.to_string();
        } else if (e2e->parsed()) {
            std::cout << "manifest: " << ncarve::cmd_e2e(config) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
