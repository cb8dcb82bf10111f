// Trains a small metric model on synthetic patch pairs and reports how the
// loss and pair separation evolve.
#include <pmiris/pmiris.hpp>

#include <cstdio>
#include <vector>

int main() {
    pmiris::SynthConfig data_cfg;
    data_cfg.n_subjects = 6;
    data_cfg.captures_per_eye = {0.0, 24.0, 60.0};
    data_cfg.seed = 3;

    std::vector<pmiris::IrisPatch> patches;
    for (const auto& cap : pmiris::generate_dataset(data_cfg))
        for (auto& p : pmiris::curate_patches(cap.polar)) patches.push_back(std::move(p));

    auto set = pmiris::build_pair_pool(patches);
    std::printf("%zu patches, %zu candidate pairs\n", set.patches.size(), set.pairs.size());

    auto model = pmiris::make_siamese_model();
    pmiris::TrainConfig cfg;
    cfg.iterations = 300;
    cfg.seed = 5;
    pmiris::Rng weight_rng(pmiris::Rng::derive(cfg.seed, 1));
    pmiris::init_weights(model, weight_rng);

    auto result = pmiris::train(model, set.patches, set.pairs, cfg);
    std::printf("loss %.4f -> %.4f over %zu iterations\n", result.loss_history.front(),
                result.loss_history.back(), result.loss_history.size());

    for (const auto& k : pmiris::extract_kernels(result.model))
        std::printf("kernel %-10s %dx%d\n", k.label.c_str(), k.rows, k.cols);
    return 0;
}
