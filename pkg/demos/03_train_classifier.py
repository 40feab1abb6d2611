"""From source text to a trained transformer, end to end and small.

We evolve a few hundred loops of each class, learn a subword vocabulary,
and fit a two-layer encoder on a fixed split. On a laptop this takes well
under a minute; the desk configuration in configs/desk.json is the
full-size version.
"""
import numpy as np

from parloop.classifier import Dataset, Hyperparameters, ModelConfig, predict, train
from parloop.corpus import assemble
from parloop.dependence import Label
from parloop.evaluation import confusion, format_class_report, kfold_split
from parloop.ga import GAConfig, evolve
from parloop.tokenizer import decode, encode, encode_batch, train_vocab

samples = []
for target in (Label.PARALLELIZABLE, Label.UNDEFINED):
    samples += evolve(GAConfig(target_class=target, population_size=120, generations=4, seed=11))
corpus = assemble(samples, per_class_cap=100)
print("corpus:", corpus.counts)

texts = [s.source_text for s in corpus.samples]
vocab = train_vocab(texts, 512)
first = encode(texts[0], vocab, 256)
print(f"vocab of {len(vocab)} tokens; the first loop is {first.true_length} tokens long")
print("round trip exact:", decode(first, vocab) == texts[0].lower())

ids, mask = encode_batch(texts, vocab, 256)
data = Dataset(ids, mask, np.array(corpus.labels))
split = kfold_split(data.labels, k=10, seed=0)[0]
tr, va, te = (data.subset(list(ix)) for ix in (split.train, split.val, split.test))

cfg = ModelConfig(vocab_size=len(vocab), num_layers=2, num_heads=4, d_model=64, d_ff=128, max_len=256)
hyper = Hyperparameters(epochs=4, batch_size=16, learning_rate=1e-3)
best, history = train(tr, va, cfg, hyper)
for e, (tl, vl) in enumerate(zip(history.train_loss, history.val_loss), 1):
    print(f"epoch {e}: train loss {tl:.4f}, validation loss {vl:.4f}")
print(f"kept epoch {best.epoch}\n")

print(format_class_report(confusion(predict(best.weights, cfg, te), te.labels)))
