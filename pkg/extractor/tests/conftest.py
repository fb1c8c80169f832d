"""Builds tiny local models so extraction runs without downloading weights."""
import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers, trainers
from transformers import LlamaConfig, LlamaModel, PreTrainedTokenizerFast, XLMRobertaConfig, XLMRobertaModel

SENTENCES = [
    "the river bank was muddy after the rain",
    "she went to the bank to open an account",
    "a bat flew out of the cave at dusk",
    "he swung the bat and hit the ball",
    "the mouse ran behind the cupboard",
    "click the mouse to open the file",
    "the spring in the mattress squeaked",
    "flowers bloom in early spring",
    'quotes "like this" and colons: appear too',
    "numbers 123 and symbols #! survive",
]


def _build_tokenizer(directory: str) -> PreTrainedTokenizerFast:
    tok = Tokenizer(models.BPE(unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    trainer = trainers.BpeTrainer(vocab_size=400, special_tokens=["<s>", "</s>", "<unk>", "<pad>"])
    tok.train_from_iterator(SENTENCES * 3, trainer)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        bos_token="<s>",
        eos_token="</s>",
        unk_token="<unk>",
        pad_token="<pad>",
    )
    fast.save_pretrained(directory)
    return fast


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory):
    directory = str(tmp_path_factory.mktemp("enc_model"))
    tokenizer = _build_tokenizer(directory)
    torch.manual_seed(0)
    config = XLMRobertaConfig(
        vocab_size=tokenizer.vocab_size + 8,
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=128,
        pad_token_id=tokenizer.pad_token_id,
    )
    XLMRobertaModel(config).save_pretrained(directory)
    return directory


@pytest.fixture(scope="session")
def tiny_decoder(tmp_path_factory):
    directory = str(tmp_path_factory.mktemp("dec_model"))
    tokenizer = _build_tokenizer(directory)
    torch.manual_seed(1)
    config = LlamaConfig(
        vocab_size=tokenizer.vocab_size + 8,
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        num_key_value_heads=2,
        intermediate_size=32,
        max_position_embeddings=128,
        pad_token_id=tokenizer.pad_token_id,
    )
    LlamaModel(config).save_pretrained(directory)
    return directory


@pytest.fixture()
def ten_row_corpus(tmp_path):
    header = (
        "instance_id\tlemma\tlanguage\tcontext_1\tstart_1\tend_1"
        "\tcontext_2\tstart_2\tend_2\tjudgments\tmedian_label\tdisagreement"
    )
    words = ["bank", "bank", "bat", "bat", "mouse", "mouse", "spring", "spring", "rain", "ball"]
    lines = [header]
    for i, word in enumerate(words):
        ctx1 = SENTENCES[i % len(SENTENCES)]
        ctx2 = SENTENCES[(i + 1) % len(SENTENCES)]
        if word not in ctx1:
            ctx1 = f"the {word} sits in this sentence"
        if word not in ctx2:
            ctx2 = f"another {word} appears right here"
        s1 = ctx1.index(word)
        s2 = ctx2.index(word)
        lines.append(
            f"r{i:02d}\t{word}\ten\t{ctx1}\t{s1}\t{s1 + len(word)}"
            f"\t{ctx2}\t{s2}\t{s2 + len(word)}\t1,2,2\t\t"
        )
    path = tmp_path / "corpus.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)
