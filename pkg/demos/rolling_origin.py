"""
Rolling-origin evaluation in updating mode
==========================================

The network is trained once, at the earliest origin. Later origins only
feed the newly observed values through the recurrent state before the next
forecast is emitted, without refitting parameters.
"""

from lstmcluster.corpus import Corpus
from lstmcluster.evaluation import evaluate_rolling_origin, format_report, naive_adapter
from lstmcluster.lstm import TrainConfig
from lstmcluster.pipeline import fit_groups, lstm_adapter, make_grouping
from lstmcluster.synthetic import two_regime_corpus

full, _ = two_regime_corpus(n_series=24, length=96, horizon=12, seed=5)
origins = 4

# training data ends where the first of the four test windows begins
train = Corpus(full.name, {s.id: s.head(len(s) - s.horizon - (origins - 1)) for s in full})
cfg = TrainConfig(cell_dim=20, epoch_size=1500, minibatch_size=4, lr_per_sample=0.003,
                  max_epochs=15, noise_std=0.001, l2_weight=0.0005)
grouping = make_grouping(train, "horizon")
groups = fit_groups(train, grouping, config=cfg, seed=0)

adapters = {"LSTM.Horizon": lstm_adapter(groups, grouping), "Naive.Seasonal": naive_adapter}
print(format_report(evaluate_rolling_origin(adapters, full, origins=origins)))
