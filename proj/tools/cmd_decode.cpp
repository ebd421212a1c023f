#include <iostream>

#include <json.hpp>

#include "commands.hpp"
#include "valr/evalbench.hpp"
#include "valr/latent_decode.hpp"

namespace valr::cli {

using nlohmann::json;

namespace {

// Prompt file: one JSON object {"images":[{"id","pixels_b64","side"}],
// "question": "..."} - the corpus sample schema without steps/answer.
ReasoningSample load_prompt(const std::string& path) {
    json j = json::parse(read_text_file(path));
    ReasoningSample s;
    s.sample_id = j.value("sample_id", std::string("prompt"));
    s.regime = Regime::MultiView;
    for (const auto& e : j.at("images")) {
        auto bytes = base64_decode(e.at("pixels_b64").get<std::string>());
        Image img;
        img.side = e.at("side").get<int>();
        img.image_id = e.at("id").get<int>();
        if (bytes.size() != size_t(img.side) * img.side * 3)
            fail("prompt: image payload size mismatch");
        img.pixels.resize(bytes.size());
        for (size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
        s.images.push_back(std::move(img));
    }
    s.question = j.at("question").get<std::string>();
    return s;
}

}  // namespace

int run_decode(const DecodeOptions& opt) {
    if (opt.checkpoint.empty() || opt.prompt_file.empty())
        fail("decode: --checkpoint and --prompt-file are required");

    Checkpoint ck = load_checkpoint(opt.checkpoint);
    ModelParams params = ck.take_model();
    const Vocabulary& vocab = Vocabulary::standard();

    ReasoningSample prompt_sample = load_prompt(opt.prompt_file);
    SequenceInput prompt = make_prompt(prompt_sample, vocab, ck.config.patches_per_image());

    DecodeConfig dcfg;
    dcfg.K = ck.config.K;
    dcfg.max_new_positions = opt.max_new;
    dcfg.latent_open = Vocabulary::kLatentOpen;
    dcfg.latent_close = Vocabulary::kLatentClose;
    dcfg.eos = Vocabulary::kEos;

    DecodeResult res = decode(ck.config, params, prompt, prompt_sample.images, dcfg);

    std::cout << vocab.decode(res.tokens, true) << "\n";
    auto answer = extract_answer(res.tokens, vocab);
    if (answer.has_value()) std::cout << "answer: " << *answer << "\n";
    if (res.trace.truncated)
        std::cerr << "[decode] truncated: " << res.trace.truncation_reason << "\n";

    if (!opt.trace_out.empty()) {
        std::string text = res.trace.to_jsonl();
        write_file_atomic(opt.trace_out, text.data(), text.size());
        std::cerr << "[decode] trace -> " << opt.trace_out << "\n";
    }
    return 0;
}

}  // namespace valr::cli
