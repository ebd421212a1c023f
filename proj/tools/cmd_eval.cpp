#include <filesystem>
#include <iostream>

#include <json.hpp>

#include "commands.hpp"
#include "valr/evalbench.hpp"

namespace valr::cli {

using nlohmann::json;

int run_eval(const EvalOptions& opt) {
    if (opt.checkpoints.empty() || opt.data_path.empty())
        fail("eval: --checkpoint and --data are required");

    auto corpus = load_jsonl(opt.data_path);
    std::vector<uint64_t> seeds;
    for (const auto& s : split_csv(opt.seeds)) seeds.push_back(std::stoull(s));

    std::vector<Checkpoint> cks;
    std::vector<ModelParams> params;
    std::vector<std::string> ck_ids;  // content hashes, stable across directories
    for (const auto& path : opt.checkpoints) {
        cks.push_back(load_checkpoint(path));
        params.push_back(cks.back().take_model());
        ck_ids.push_back(hex64(hash_file(path)));
        if (cks.back().config.to_json() != cks[0].config.to_json())
            fail("eval: checkpoints disagree on model config");
    }

    DecodeConfig dcfg;
    dcfg.K = cks[0].config.K;
    dcfg.max_new_positions = 192;
    dcfg.latent_open = Vocabulary::kLatentOpen;
    dcfg.latent_close = Vocabulary::kLatentClose;
    dcfg.eos = Vocabulary::kEos;

    std::string report;
    if (opt.checkpoints.size() == 1 && seeds.size() <= 1) {
        EvalReport rep = evaluate(cks[0].config, params[0], corpus, dcfg);
        rep.checkpoint_id = ck_ids[0];
        rep.seed = seeds.empty() ? 0 : seeds[0];
        report = rep.to_json();
        std::cout << "accuracy " << rep.overall.accuracy() << " on " << rep.overall.n
                  << " samples (" << rep.missing_marker << " missing answer marker)\n";
        for (const auto& [name, cell] : rep.per_family)
            std::cout << "  " << name << ": " << cell.accuracy() << " (n=" << cell.n << ")\n";
    } else {
        if (seeds.empty()) seeds.push_back(0);
        std::vector<std::pair<std::string, const ModelParams*>> models;
        for (size_t i = 0; i < params.size(); ++i)
            models.emplace_back(ck_ids[i], &params[i]);
        if (models.size() == 1) models.emplace_back(ck_ids[0], &params[0]);
        auto rows = compare(models, cks[0].config, corpus, dcfg, seeds);
        if (opt.checkpoints.size() == 1) rows.resize(1);
        report = compare_table_json(rows);
        std::cout << compare_table_text(rows);
    }

    if (!opt.report_out.empty()) {
        write_file_atomic(opt.report_out, report.data(), report.size());
        std::cerr << "[eval] report -> " << opt.report_out << "\n";
    }
    return 0;
}

}  // namespace valr::cli
