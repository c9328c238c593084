import json

import numpy as np
import pytest

from rpm_exporter.export import ExportConfig, UnsupportedArchitecture, export

# the pruning toolkit is used here purely as the consumer-side oracle for
# the emitted files
from rankprune import cli, llm_chain, model_io


def do_export(checkpoint, tmp_path, **kw):
    cfg = ExportConfig(checkpoint, str(tmp_path / "model.rpm"),
                       str(tmp_path / "model.calib.json"), **kw)
    export(cfg)
    return cfg


def test_round_trip_loads_in_toolkit(tiny_checkpoint, tmp_path, capsys):
    cfg = do_export(tiny_checkpoint, tmp_path, samples=2, seq_len=8)
    model = model_io.read_model(cfg.output_model)
    assert model.config.d_model == 8
    assert model.config.d_ff == [16, 16]
    assert model.config.ffn_kind == "gated"
    assert model.config.norm == "rmsnorm"
    assert llm_chain.chain_ffns(model).widths == [8, 16, 8, 16, 8]

    assert cli.main(["chain-info", "--model", cfg.output_model]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["chain_widths"] == [8, 16, 8, 16, 8]


def test_calibration_matches_toolkit_forward(tiny_checkpoint, tmp_path):
    cfg = do_export(tiny_checkpoint, tmp_path, samples=4, seq_len=12, seed=3)
    model = model_io.read_model(cfg.output_model)
    exported = model_io.read_calib(cfg.output_calib)

    rng = np.random.default_rng(3)
    batches = [rng.integers(0, 64, size=12).tolist() for _ in range(4)]
    own = llm_chain.calibrate_transformer(model, batches)

    assert np.max(np.abs(exported.input_norms - own.input_norms)) < 1e-4
    for a, b in zip(exported.layer_norms, own.layer_norms):
        assert np.max(np.abs(a - b)) < 1e-4
    for blk_a, blk_b in zip(exported.metadata["attn_norms"],
                            own.metadata["attn_norms"]):
        for role in ("wq", "wk", "wv"):
            assert np.max(np.abs(np.asarray(blk_a[role])
                                 - np.asarray(blk_b[role]))) < 1e-4


def test_exported_calib_scores_and_plans(tiny_checkpoint, tmp_path):
    cfg = do_export(tiny_checkpoint, tmp_path, samples=2, seq_len=8)
    scores = tmp_path / "s.json"
    plan = tmp_path / "p.json"
    assert cli.main(["score", "--model", cfg.output_model, "--calib",
                     cfg.output_calib, "--method", "wpr",
                     "--output", str(scores)]) == 0
    assert cli.main(["plan", "--scores", str(scores), "--model",
                     cfg.output_model, "--sparsity-local", "0.25",
                     "--output", str(plan)]) == 0
    assert cli.main(["prune", "--model", cfg.output_model, "--plan",
                     str(plan), "--output", str(tmp_path / "pruned.rpm")]) == 0
    pruned = model_io.read_model(tmp_path / "pruned.rpm")
    assert pruned.config.d_ff == [12, 12]


def test_single_sample_beta_shapes(tiny_checkpoint, tmp_path):
    cfg = do_export(tiny_checkpoint, tmp_path, samples=1, seq_len=8)
    calib = model_io.read_calib(cfg.output_calib)
    assert calib.input_norms.shape == (8,)
    assert [v.shape[0] for v in calib.layer_norms] == [16, 8, 16, 8]
    assert calib.metadata["token_count"] == 8


def test_reexport_is_byte_identical(tiny_checkpoint, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = do_export(tiny_checkpoint, tmp_path / "a", samples=2, seq_len=8, seed=5)
    b = do_export(tiny_checkpoint, tmp_path / "b", samples=2, seq_len=8, seed=5)
    assert open(a.output_model, "rb").read() == open(b.output_model, "rb").read()
    assert open(a.output_calib, "rb").read() == open(b.output_calib, "rb").read()


def test_token_file_source(tiny_checkpoint, tmp_path):
    tokens = tmp_path / "tokens.json"
    tokens.write_text(json.dumps([[1, 2, 3, 4], [5, 6, 7, 8]]))
    cfg = do_export(tiny_checkpoint, tmp_path, tokens_file=str(tokens))
    calib = model_io.read_calib(cfg.output_calib)
    assert calib.metadata["token_source"] == str(tokens)
    assert calib.metadata["token_count"] == 8


def test_sample_count_validated(tiny_checkpoint, tmp_path):
    with pytest.raises(ValueError):
        ExportConfig(tiny_checkpoint, "m", "c", samples=0)


def test_grouped_query_attention_rejected(tmp_path):
    import torch
    from transformers import LlamaConfig, LlamaForCausalLM

    cfg = LlamaConfig(vocab_size=32, hidden_size=8, intermediate_size=16,
                      num_hidden_layers=1, num_attention_heads=2,
                      num_key_value_heads=1, tie_word_embeddings=False)
    torch.manual_seed(0)
    path = tmp_path / "gqa"
    LlamaForCausalLM(cfg).save_pretrained(path)
    with pytest.raises(UnsupportedArchitecture):
        do_export(str(path), tmp_path)


def test_unsupported_architecture_lists_missing_roles(tmp_path):
    from transformers import GPT2Config, GPT2LMHeadModel

    cfg = GPT2Config(vocab_size=32, n_positions=16, n_embd=8, n_layer=1,
                     n_head=2)
    path = tmp_path / "gpt2"
    GPT2LMHeadModel(cfg).save_pretrained(path)
    with pytest.raises(UnsupportedArchitecture) as excinfo:
        do_export(str(path), tmp_path)
    # gpt2 has none of the llama-family layout, starting at the embedding
    assert "embed_tokens" in str(excinfo.value)
    assert "layers" in str(excinfo.value)
