// Test-only predictor server speaking the stdio protocol. It wraps the
// in-process ScriptedPredictor so engine-side decodes can be compared against
// local ones. Fault switches exercise the client's error paths.
//
//   fake_pred_server --gen-len N --block-len N [--jitter J] [--seed S]
//                    [--proto NAME] [--drop-last] [--wrong-id] [--die-after K]

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mdm/predictor.hpp"
#include "mdm/wire.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fake predictor server"};
  std::size_t gen_len = 0, block_len = 0;
  double jitter = 0.0;
  std::uint64_t seed = 0;
  std::string proto(mdm::wire::kProtocol);
  bool drop_last = false, wrong_id = false;
  long die_after = -1;
  app.add_option("--gen-len", gen_len)->required();
  app.add_option("--block-len", block_len)->required();
  app.add_option("--jitter", jitter);
  app.add_option("--seed", seed);
  app.add_option("--proto", proto);
  app.add_flag("--drop-last", drop_last);
  app.add_flag("--wrong-id", wrong_id);
  app.add_option("--die-after", die_after);
  CLI11_PARSE(app, argc, argv);

  mdm::ScriptedSchedule schedule;
  schedule.jitter_scale = jitter;
  schedule.seed = seed;
  mdm::ScriptedPredictor predictor(schedule);

  std::cout << mdm::wire::encode_handshake({proto, mdm::kByteVocab, mdm::kByteMaskId}) << std::flush;

  std::string line;
  long served = 0;
  while (std::getline(std::cin, line)) {
    if (die_after >= 0 && served >= die_after) return 0;
    std::uint64_t id = 0;
    try {
      const auto req = mdm::wire::decode_request(line);
      id = req.id;
      const std::size_t prompt_len = req.tokens.size() - gen_len;
      nlohmann::json state_json;
      state_json["prompt"] = std::vector<mdm::TokenId>(req.tokens.begin(), req.tokens.begin() + prompt_len);
      state_json["tokens"] = req.tokens;
      std::vector<bool> masked;
      for (auto t : req.tokens) masked.push_back(t == req.mask_id);
      state_json["masked"] = masked;
      state_json["block_len"] = block_len;
      const auto state = mdm::sequence_from_json(state_json, req.mask_id);
      const auto b = static_cast<mdm::BlockIndex>((req.block_begin - prompt_len) / block_len) + 1;

      auto frame = predictor.predict(state, b, req.step);
      if (drop_last && !frame.entries.empty()) frame.entries.pop_back();
      std::cout << mdm::wire::encode_response(frame, wrong_id ? id + 1000 : id) << std::flush;
    } catch (const std::exception& e) {
      std::cout << mdm::wire::encode_error(id, e.what()) << std::flush;
    }
    ++served;
  }
  return 0;
}
