#include "vmb/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "vmb/binary_io.hpp"
#include "vmb/checkpoint.hpp"
#include "vmb/errors.hpp"
#include "vmb/pipeline.hpp"
#include "vmb/retrieval.hpp"

namespace vmb {

namespace {

using nlohmann::json;

// --seed falls back to the VMB_SEED environment variable, then to 0.
uint64_t default_seed() {
  const char* env = std::getenv("VMB_SEED");
  if (!env || !*env) return 0;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    throw ValidationError("VMB_SEED is not an unsigned integer");
  }
}

std::map<EmbeddingSpace, StoreRef> load_stores(const std::string& audio_path,
                                               const std::string& text_path) {
  std::map<EmbeddingSpace, StoreRef> stores;
  stores[EmbeddingSpace::audio] =
      StoreRef{audio_path, std::make_shared<EmbeddingStore>(load_store(audio_path))};
  if (!text_path.empty()) {
    stores[EmbeddingSpace::text] =
        StoreRef{text_path, std::make_shared<EmbeddingStore>(load_store(text_path))};
  }
  return stores;
}

struct CommonOpts {
  uint64_t seed = default_seed();
  uint64_t provider_seed = 0;
  uint64_t latent_seed = 0;
};

void add_seed_opts(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--seed", opts.seed, "random seed (default: $VMB_SEED or 0)");
  cmd->add_option("--provider-seed", opts.provider_seed, "stub embedding provider seed");
  cmd->add_option("--latent-seed", opts.latent_seed, "synthetic latent source seed");
}

int cmd_ingest(const std::string& manifest_path, const std::string& vocab_path,
               const std::string& store_path, const std::string& out_path,
               const std::string& report_path, const IngestConfig& config) {
  auto stores = load_stores(store_path, "");
  TagVocabulary vocab = load_vocabulary(vocab_path, *stores[EmbeddingSpace::audio].store);
  std::vector<TrackRecord> raw = load_track_records(manifest_path);
  auto [manifest, report] = ingest_dataset(raw, vocab, stores, config);
  save_track_records(manifest.records, out_path);
  std::string report_json = ingest_report_json(report);
  if (!report_path.empty()) write_file(report_path, report_json + "\n");
  std::cout << report_json << "\n";
  return 0;
}

int cmd_tag(const std::string& store_path, const std::string& vocab_path, const std::string& id) {
  EmbeddingStore store = load_store(store_path);
  TagVocabulary vocab = load_vocabulary(vocab_path, store);
  TagResult result = tag_track(store.at(id), vocab);
  json out = json::object();
  for (const auto& [cat, scored] : result) {
    json list = json::array();
    for (const ScoredTag& t : scored) list.push_back({{"tag", t.name}, {"score", t.score}});
    out[to_string(cat)] = list;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_index_build(const std::string& manifest_path, const std::string& vocab_path,
                    const std::string& store_path, const std::string& text_store_path,
                    const std::string& out_path) {
  auto stores = load_stores(store_path, text_store_path);
  DatasetManifest manifest;
  manifest.vocabulary = load_vocabulary(vocab_path, *stores[EmbeddingSpace::audio].store);
  manifest.records = load_track_records(manifest_path);
  manifest.stores = stores;
  manifest.validate();
  RetrievalIndex index = build_index(manifest);
  save_index(index, out_path);
  json summary;
  summary["tracks"] = index.broad.count(EmbeddingSpace::audio)
                          ? index.broad.at(EmbeddingSpace::audio).size()
                          : 0;
  summary["excluded"] = index.excluded;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_index_query(const std::string& index_path, const std::string& mode,
                    const std::string& query_text, const std::string& query_id,
                    const std::string& space_name, size_t k, const std::string& category_name,
                    const std::string& subset, const std::string& attr_text_opt,
                    const CommonOpts& opts) {
  RetrievalIndex index = load_index(index_path);
  json out = json::array();
  if (mode == "broad") {
    EmbeddingSpace space = space_from_string(space_name);
    EmbeddingVector query;
    if (!query_id.empty()) {
      query = index.embedding_of(EmbeddingSpace::audio, query_id);
      space = EmbeddingSpace::audio;
    } else if (!query_text.empty()) {
      Providers prov{opts.provider_seed, opts.latent_seed};
      query = prov.query_embedding(query_text, space, index.manifest.store(space).dim());
    } else {
      throw ValidationError("index query: --query-text or --query-id is required in broad mode");
    }
    for (const RetrievalResult& r : broad_retrieve(query, space, index, k)) {
      out.push_back({{"rank", r.rank}, {"track_id", r.track_id}, {"score", r.score}});
    }
  } else if (mode == "targeted") {
    if (category_name.empty() || subset.empty()) {
      throw ValidationError("index query: --category and --subset are required in targeted mode");
    }
    TagCategory cat = category_from_string(category_name);
    std::string attr = attr_text_opt.empty() ? attribute_text(cat, subset) : attr_text_opt;
    StubAttributeEmbedder embedder(index.manifest.store(EmbeddingSpace::audio).dim(),
                                   opts.provider_seed);
    RetrievalResult r = targeted_retrieve(attr, cat, subset, index, embedder);
    out.push_back({{"rank", r.rank}, {"track_id", r.track_id}, {"score", r.score}});
  } else {
    throw ValidationError("index query: unknown mode \"" + mode + "\"");
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& index_path, const std::string& out_path,
              const std::string& loss_log, const ModelConfig& mcfg, TrainConfig tcfg,
              const CommonOpts& opts) {
  RetrievalIndex index = load_index(index_path);
  tcfg.seed = opts.seed;
  Providers prov{opts.provider_seed, opts.latent_seed};
  TrainResult result = train(index.manifest, index, mcfg, tcfg, prov);
  save_checkpoint(result.checkpoint, out_path);
  if (!loss_log.empty()) {
    std::string lines;
    for (size_t i = 0; i < result.loss_history.size(); ++i) {
      lines += std::to_string(i) + "\t" + std::to_string(result.loss_history[i]) + "\n";
    }
    write_file(loss_log, lines);
  }
  json summary;
  summary["steps"] = result.loss_history.size();
  summary["final_loss"] = result.loss_history.empty() ? 0.0 : result.loss_history.back();
  summary["checkpoint"] = out_path;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_generate(const std::string& checkpoint_path, const std::string& index_path,
                 GenerationRequest request, const std::string& out_path,
                 std::string trace_path, const CommonOpts& opts) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RetrievalIndex index = load_index(index_path);
  Providers prov{opts.provider_seed, opts.latent_seed};
  request.seed = opts.seed;
  GenerationOutput out = generate(request, ckpt, index, prov);
  save_latent(out.latent, out_path);
  if (trace_path.empty()) trace_path = out_path + ".trace.json";
  write_file(trace_path, out.trace.to_json() + "\n");
  json summary;
  summary["latent"] = out_path;
  summary["trace"] = trace_path;
  summary["control"] = out.trace.control.kind;
  summary["control_track"] = out.trace.control.track_id;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

std::vector<EvalAttribute> parse_attributes(const std::string& spec) {
  std::vector<EvalAttribute> out;
  size_t pos = 0;
  while (pos < spec.size()) {
    size_t comma = spec.find(',', pos);
    std::string item = spec.substr(pos, comma == std::string::npos ? comma : comma - pos);
    pos = comma == std::string::npos ? spec.size() : comma + 1;
    if (item.empty()) continue;
    size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("eval: attribute \"" + item + "\" is not category=value");
    }
    out.push_back({category_from_string(item.substr(0, eq)), item.substr(eq + 1)});
  }
  return out;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& index_path,
             const std::string& attributes, EvalConfig cfg, const std::string& out_path,
             const CommonOpts& opts) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  RetrievalIndex index = load_index(index_path);
  cfg.attributes = parse_attributes(attributes);
  cfg.seed = opts.seed;
  Providers prov{opts.provider_seed, opts.latent_seed};
  LatentPoolEmbedder embedder(index.manifest.store(EmbeddingSpace::audio).dim());
  EvalReport report = evaluate_controllability(ckpt, index, cfg, prov, embedder);
  std::string report_json = report.to_json();
  if (!out_path.empty()) write_file(out_path, report_json + "\n");
  std::cout << report_json << "\n";
  return 0;
}

int cmd_inspect(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 4) throw FormatError("inspect: file too short for a magic tag");
  std::string magic = bytes.substr(0, 4);
  json out;
  out["path"] = path;
  out["magic"] = magic;
  if (magic == "VMBE") {
    EmbeddingStore store = decode_store(bytes);
    out["kind"] = "embedding store";
    out["space"] = to_string(store.space());
    out["dim"] = store.dim();
    out["count"] = store.size();
  } else if (magic == "VMBI") {
    RetrievalIndex index = load_index(path);
    out["kind"] = "retrieval index";
    out["tracks"] = index.manifest.records.size();
    json parts = json::object();
    for (const auto& [cat, partition] : index.partitions) {
      json sizes = json::object();
      for (const auto& [name, ids] : partition) sizes[name] = ids.size();
      parts[to_string(cat)] = sizes;
    }
    out["partitions"] = parts;
  } else if (magic == "VMBC") {
    Checkpoint ckpt = decode_checkpoint(bytes);
    out["kind"] = "checkpoint";
    out["n_layers"] = ckpt.config.n_layers;
    out["d_model"] = ckpt.config.d_model;
    out["n_heads"] = ckpt.config.n_heads;
    out["d_latent"] = ckpt.config.d_latent;
    out["control_layers"] = ckpt.config.control_layers;
    out["tensors"] =
        ckpt.params.tensors.size() + (ckpt.control ? ckpt.control->params.tensors.size() : 0);
  } else if (magic == "VMBL") {
    LatentSequence latent = decode_latent(bytes);
    out["kind"] = "latent";
    out["frames"] = static_cast<int64_t>(latent.frames());
    out["dim"] = static_cast<int64_t>(latent.dim());
  } else {
    throw FormatError("inspect: unknown magic \"" + magic + "\"");
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"vmb: desk-scale retrieval-augmented music latent generation"};
  app.require_subcommand(1);

  CommonOpts opts;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "filter and tag a raw manifest");
  std::string in_manifest, in_vocab, in_store, in_out, in_report;
  IngestConfig ingest_cfg;
  ingest->add_option("--manifest", in_manifest, "raw manifest (JSONL)")->required();
  ingest->add_option("--vocab", in_vocab, "vocabulary JSON")->required();
  ingest->add_option("--store", in_store, "audio embedding store (.vmbe)")->required();
  ingest->add_option("--out", in_out, "output manifest (JSONL)")->required();
  ingest->add_option("--report", in_report, "write the ingest report JSON here");
  ingest->add_option("--vocal-threshold", ingest_cfg.vocal_threshold, "vocal gate threshold");
  ingest->add_option("--pam-threshold", ingest_cfg.pam_threshold, "quality gate threshold");

  // tag
  auto* tag = app.add_subcommand("tag", "tag one stored audio embedding");
  std::string tag_store, tag_vocab, tag_id;
  tag->add_option("--store", tag_store, "audio embedding store (.vmbe)")->required();
  tag->add_option("--vocab", tag_vocab, "vocabulary JSON")->required();
  tag->add_option("--id", tag_id, "embedding id to tag")->required();

  // index build | query
  auto* index_cmd = app.add_subcommand("index", "build or query the retrieval index");
  index_cmd->require_subcommand(1);
  auto* ib = index_cmd->add_subcommand("build", "build an index from a manifest");
  std::string ib_manifest, ib_vocab, ib_store, ib_text_store, ib_out;
  ib->add_option("--manifest", ib_manifest, "ingested manifest (JSONL)")->required();
  ib->add_option("--vocab", ib_vocab, "vocabulary JSON")->required();
  ib->add_option("--store", ib_store, "audio embedding store (.vmbe)")->required();
  ib->add_option("--text-store", ib_text_store, "text embedding store (.vmbe)");
  ib->add_option("--out", ib_out, "output index (.vmbi)")->required();

  auto* iq = index_cmd->add_subcommand("query", "query an index");
  std::string iq_index, iq_mode = "broad", iq_text, iq_id, iq_space = "text";
  std::string iq_category, iq_subset, iq_attr;
  size_t iq_k = 1;
  iq->add_option("--index", iq_index, "index file (.vmbi)")->required();
  iq->add_option("--mode", iq_mode, "broad or targeted");
  iq->add_option("--query-text", iq_text, "text query (embedded with the stub provider)");
  iq->add_option("--query-id", iq_id, "use this track's audio embedding as the query");
  iq->add_option("--space", iq_space, "query space: audio, text or visual");
  iq->add_option("--k", iq_k, "number of results (broad mode)");
  iq->add_option("--category", iq_category, "partition category (targeted mode)");
  iq->add_option("--subset", iq_subset, "subset name (targeted mode)");
  iq->add_option("--attribute-text", iq_attr, "attribute text (defaults to the subset name)");
  add_seed_opts(iq, opts);

  // train
  auto* tr = app.add_subcommand("train", "train the generator on an index");
  std::string tr_index, tr_out, tr_loss_log;
  ModelConfig tr_mcfg;
  TrainConfig tr_tcfg;
  tr->add_option("--index", tr_index, "index file (.vmbi)")->required();
  tr->add_option("--out", tr_out, "output checkpoint (.vmbc)")->required();
  tr->add_option("--loss-log", tr_loss_log, "write per-step losses here (TSV)");
  tr->add_option("--steps", tr_tcfg.steps, "optimizer steps");
  tr->add_option("--lr", tr_tcfg.lr, "learning rate");
  tr->add_option("--momentum", tr_tcfg.momentum, "momentum coefficient");
  tr->add_option("--weight-decay", tr_tcfg.weight_decay, "decoupled weight decay");
  tr->add_option("--optimizer", tr_tcfg.optimizer, "sgdm or adam");
  tr->add_option("--p-style", tr_tcfg.p_style, "per-step style conditioning probability");
  tr->add_option("--cond-dropout", tr_tcfg.cond_dropout, "null-conditioning dropout rate");
  tr->add_flag("--no-exclude-self", [&tr_tcfg](int64_t) { tr_tcfg.exclude_self = false; },
               "allow a sample to retrieve itself as control music");
  tr->add_option("--frames", tr_tcfg.frames, "training latent length");
  tr->add_option("--layers", tr_mcfg.n_layers, "transformer layers");
  tr->add_option("--d-model", tr_mcfg.d_model, "model width");
  tr->add_option("--heads", tr_mcfg.n_heads, "attention heads");
  tr->add_option("--d-latent", tr_mcfg.d_latent, "latent dimension");
  tr->add_option("--d-text", tr_mcfg.d_text, "text token dimension");
  tr->add_option("--max-text-tokens", tr_mcfg.max_text_tokens, "text token cap");
  tr->add_option("--control-layers", tr_mcfg.control_layers, "replicated control layers");
  tr->add_option("--d-style", tr_mcfg.d_style, "style embedding dimension");
  tr->add_option("--max-frames", tr_mcfg.max_frames, "position table length");
  add_seed_opts(tr, opts);

  // generate
  auto* gen = app.add_subcommand("generate", "generate a latent from a prompt");
  std::string gen_ckpt, gen_index, gen_out, gen_trace, gen_reference, gen_space = "text";
  GenerationRequest gen_request;
  std::string gen_genre, gen_tempo, gen_mood, gen_instrument;
  gen->add_option("--checkpoint", gen_ckpt, "checkpoint file (.vmbc)")->required();
  gen->add_option("--index", gen_index, "index file (.vmbi)")->required();
  gen->add_option("--prompt", gen_request.prompt, "text prompt")->required();
  gen->add_option("--genre", gen_genre, "genre control");
  gen->add_option("--tempo", gen_tempo, "tempo control");
  gen->add_option("--mood", gen_mood, "mood control");
  gen->add_option("--instrument", gen_instrument, "instrument control (prompt-only)");
  gen->add_option("--reference-id", gen_reference, "user-provided control track id");
  gen->add_option("--steps", gen_request.steps, "sampler steps");
  gen->add_option("--cfg-scale", gen_request.cfg_scale, "classifier-free guidance scale");
  gen->add_option("--frames", gen_request.frames, "output latent frames");
  gen->add_option("--query-space", gen_space, "broad retrieval space (audio/text/visual)");
  gen->add_option("--out", gen_out, "output latent (.vmbl)")->required();
  gen->add_option("--trace", gen_trace, "trace JSON path (default: <out>.trace.json)");
  add_seed_opts(gen, opts);

  // eval
  auto* ev = app.add_subcommand("eval", "controllability evaluation");
  std::string ev_ckpt, ev_index, ev_attrs, ev_out;
  EvalConfig ev_cfg;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file (.vmbc)")->required();
  ev->add_option("--index", ev_index, "index file (.vmbi)")->required();
  ev->add_option("--attributes", ev_attrs,
                 "comma-separated category=value pairs (default: one per partition)");
  ev->add_option("--songs", ev_cfg.n_songs, "songs sampled per attribute");
  ev->add_option("--variations", ev_cfg.n_variations, "variations per song");
  ev->add_option("--steps", ev_cfg.steps, "sampler steps per generation");
  ev->add_option("--cfg-scale", ev_cfg.cfg_scale, "guidance scale");
  ev->add_option("--frames", ev_cfg.frames, "latent frames per generation");
  ev->add_option("--out", ev_out, "write the report JSON here");
  add_seed_opts(ev, opts);

  // inspect
  auto* ins = app.add_subcommand("inspect", "describe any vmb container file");
  std::string ins_file;
  ins->add_option("--file", ins_file, "file to describe")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (*ingest) return cmd_ingest(in_manifest, in_vocab, in_store, in_out, in_report, ingest_cfg);
    if (*tag) return cmd_tag(tag_store, tag_vocab, tag_id);
    if (*ib) return cmd_index_build(ib_manifest, ib_vocab, ib_store, ib_text_store, ib_out);
    if (*iq) {
      return cmd_index_query(iq_index, iq_mode, iq_text, iq_id, iq_space, iq_k, iq_category,
                             iq_subset, iq_attr, opts);
    }
    if (*tr) return cmd_train(tr_index, tr_out, tr_loss_log, tr_mcfg, tr_tcfg, opts);
    if (*gen) {
      if (!gen_genre.empty()) gen_request.attribute_controls[TagCategory::genre] = gen_genre;
      if (!gen_tempo.empty()) gen_request.attribute_controls[TagCategory::tempo] = gen_tempo;
      if (!gen_mood.empty()) gen_request.attribute_controls[TagCategory::mood] = gen_mood;
      if (!gen_instrument.empty()) {
        gen_request.attribute_controls[TagCategory::instrument] = gen_instrument;
      }
      if (!gen_reference.empty()) gen_request.reference_music_id = gen_reference;
      gen_request.query_space = space_from_string(gen_space);
      return cmd_generate(gen_ckpt, gen_index, gen_request, gen_out, gen_trace, opts);
    }
    if (*ev) return cmd_eval(ev_ckpt, ev_index, ev_attrs, ev_cfg, ev_out, opts);
    if (*ins) return cmd_inspect(ins_file);
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace vmb
