// Generates a synthetic scene, lets three simulated players click on it,
// segments it and prints the scores of both stages.

#include <clickseg/eval.hpp>
#include <clickseg/synthetic.hpp>
#include <clickseg/temporal.hpp>

#include <cstdio>
#include <cstdlib>

int main(int argc, char** argv)
{
    using namespace clickseg;
    SceneOptions scene_opt;
    scene_opt.width = 320;
    scene_opt.height = 240;
    scene_opt.min_radius = 20;
    scene_opt.max_radius = 40;
    scene_opt.texture = 0.1;
    scene_opt.seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
    const SyntheticScene scene = make_scene(scene_opt);

    ClickerProfile profile;
    profile.clicks_per_frame_rate = 30;
    profile.spatial_sigma = 8;
    profile.miss_rate = 0.15;
    profile.reaction_delay = 2;
    profile.preference_spread = 1;
    std::vector<ClickLog> logs;
    for (int u = 0; u < 3; ++u) {
        profile.seed = 100 + u;
        logs.push_back(simulate_clicks(scene.object_gt, profile, "player" + std::to_string(u), "demo"));
    }
    const ClickLog log = merge_logs(logs);

    PipelineOptions opt;
    const SegmentationResult r = segment_sequence(scene.frames, log, opt);
    const Prf s1 = prf(r.stage1_masks, scene.gt);
    const Prf s2 = prf(r.masks, scene.gt);
    std::printf("clicks      %zu\n", log.size());
    std::printf("stage 1     F1 %.3f  POM %.3f\n", s1.f1, pom(r.stage1_masks, scene.gt));
    std::printf("temporal    F1 %.3f  POM %.3f\n", s2.f1, pom(r.masks, scene.gt));
    std::printf("features    %.0f ms, segmentation %.0f ms\n", r.artifact_ms, r.window_ms);
}
