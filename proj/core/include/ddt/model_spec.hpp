// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <filesystem>
#include <memory>
#include <string_view>

#include "ddt/providers.hpp"
#include "ddt/tokenizer.hpp"

namespace ddt {

/// A provider together with the tokenizer that maps text to its token ids.
struct LanguageModel {
  std::shared_ptr<const Provider> provider;
  Tokenizer tokenizer;
};

/// Builds a model from a JSON provider spec. Relative paths inside the spec resolve against
/// the spec file's directory. Kinds:
///
///   {"kind": "ngram", "tokenizer": "whitespace", "corpus": "train.txt", "order": 3,
///    "smoothing": 0.01, "interpolation": [0.1, 0.3, 0.6],
///    "hint_copy": {"open": "<hint>", "close": "</hint>", "bag_bias": 2, "copy_bias": 6}}
///   {"kind": "table", "tokenizer": "char", "vocab": [...], "default": [probs],
///    "rules": [{"suffix": [tokens], "probs": [...]}]}
///   {"kind": "remote", "endpoint_url": "...", "model_name": "...", "vocab_size": N,
///    "eos_id": 2, "top_logprobs": 20, "api_key_env": "DDT_API_KEY"}
///
/// For n-grams the corpus holds one training sequence per line. `interpolation` mixes the
/// models of orders 1..k with the given weights; without it a single model of `order` is
/// used, or with "backoff": true the backoff model over orders 1..`order`. `vocab_file`
/// (one token per line) fixes the vocabulary instead of deriving it.
LanguageModel load_model(const std::filesystem::path& spec_path);
LanguageModel load_model_from_json(std::string_view json_text, const std::filesystem::path& base_dir);

}  // namespace ddt
