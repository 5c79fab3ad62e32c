// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Writes a synthetic two-population corpus (clean speech, noise and
// manifests) for smoke runs of the vaenmf tool.

#include <iostream>

#include "CLI11.hpp"
#include "vaenmf/synth.h"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic speech corpus"};
  vaenmf::ToyCorpusConfig c;
  std::string dir;
  app.add_option("--dir", dir, "Output directory")->required();
  app.add_option("--speakers-a", c.speakers_a, "Neurotypical speakers");
  app.add_option("--speakers-b", c.speakers_b, "Pathological speakers");
  app.add_option("--sentences", c.sentences, "Sentences per speaker");
  app.add_option("--sentence-seconds", c.sentence_s);
  app.add_option("--read-seconds", c.read_text_s);
  app.add_option("--monologue-seconds", c.monologue_s);
  app.add_option("--noises-per-kind", c.noises_per_kind);
  app.add_option("--noise-seconds", c.noise_s);
  app.add_option("--prefix", c.speaker_prefix, "Speaker id prefix");
  app.add_option("--language", c.language);
  app.add_option("--seed", c.seed);
  CLI11_PARSE(app, argc, argv);
  try {
    const auto corpus = vaenmf::WriteToyCorpus(c, dir);
    std::cerr << "wrote " << corpus.manifest.records.size() << " utterances and "
              << corpus.noises.records.size() << " noises to " << dir << '\n';
  } catch (const vaenmf::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
