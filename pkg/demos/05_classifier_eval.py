"""Evaluate the histogram baseline and the oracle on the bundled 750-frame
datasets with a stratified 80/20 split."""

from heritage_wsn import fixtures
from heritage_wsn.vision import run_evaluation

for scheme, path in (("binary", fixtures.DATASET_BINARY), ("multimodal", fixtures.DATASET_MULTIMODAL)):
    for oracle in (False, True):
        rep = run_evaluation(path, scheme, seed=0, use_oracle=oracle)
        print(f"{scheme:<11}{rep.classifier:<26} train {rep.train_size} / test {rep.test_size}  {rep.summary()}")
    print(rep.confusion.to_csv(rep.classes))
