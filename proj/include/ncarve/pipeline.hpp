#pragma once

#include "ncarve/config.hpp"
#include "ncarve/eval.hpp"
#include "ncarve/mesh.hpp"

#include <string>
#include <vector>

namespace ncarve {

/// The proxy mesh the config describes (condition source and carve prior).
Mesh build_proxy(const PipelineConfig& config);

/// Front camera at the configured resolution; scale auto-fits the proxy
/// unless the config pins it.
Camera base_camera(const PipelineConfig& config, const Mesh& proxy);

std::vector<NormalMap> render_ring(const Mesh& mesh, const std::vector<Camera>& ring,
                                   double softness = 0.0);

/// FNV-1a hash of a file, as 16 hex digits.
std::string hash_file(const std::string& path);

struct GenerateOutput {
    NormalMap front;
    NormalMap back;
    std::string front_path;
    std::string back_path;
};

struct CarveOutput {
    Mesh mesh;
    std::string obj_path;
    std::vector<double> loss_history;
};

// CLI entry points. Every command derives its random stream from the config
// seed, so identical (config, seed) runs write identical artifacts.
std::string cmd_synth_data(const PipelineConfig& config);
std::vector<double> cmd_train(const PipelineConfig& config);
GenerateOutput cmd_generate(const PipelineConfig& config);
CarveOutput cmd_carve(const PipelineConfig& config, const std::string& front_path,
                      const std::string& back_path);
CarveOutput cmd_refine(const PipelineConfig& config, const std::string& mesh_path);
GenerateOutput cmd_guided(const PipelineConfig& config, const std::string& front_path);
std::vector<std::string> cmd_render(const PipelineConfig& config, const std::string& mesh_path);
EvalReport cmd_eval(const PipelineConfig& config, const std::string& mesh_path,
                    const std::string& reference_path);
std::string cmd_e2e(const PipelineConfig& config);  // returns manifest path

}  // namespace ncarve
