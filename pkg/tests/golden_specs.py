"""Fixture specs whose rendered prompts are frozen under tests/golden/."""
import numpy as np

from senselabel.prompts import EmbeddingPromptSpec, RawPromptSpec

HAND = "the wearable worn by the user on their dominant hand"

GOLDEN_SPECS = {
    "raw_zero_examples": RawPromptSpec(["walking", "running"], [0.1234, -9.81, 3.5], body_position_text=HAND),
    "raw_with_examples": RawPromptSpec(
        ["running", "walking"], [0.1234, -9.81, 3.5],
        examples={"running": [[1.5, 2.25, -9.8]], "walking": [[0.5, 0.25, -9.7], [-0.125, 0.0, -9.75]]},
        body_position_text=HAND),
    "raw_with_metric": RawPromptSpec(
        ["jogging", "walking upstairs"], [-0.0933, 0.0165, 0.0609],
        examples={"jogging": [[0.0223, 0.1115, 0.3571]], "walking upstairs": [[0.2615, 0.118, -0.0637]]},
        body_position_text="the smartphone stored in the user's trousers' front pocket",
        metric_name="euclidean"),
    "embedding_two_class": EmbeddingPromptSpec(
        ["walking upstairs", "jogging"],
        [np.array([[14.226081, 6.4440064], [0.57457817, -22.347515]]),
         np.array([[56.372967, 5.0068436], [53.95932, -21.747236]])],
        np.array([14.239516, 7.1703763]), "euclidean", 7),
    "embedding_three_class": EmbeddingPromptSpec(
        ["class 1", "class 2", "class 3"],
        [np.array([[1.0, -2.5, 0.125]]),
         np.array([[0.0, 3.0, -1.0], [2.0, 2.0, 2.0]]),
         np.array([[-7.25, 0.5, 4.0]])],
        np.array([0.5, 0.5, -0.5]), "cosine", 3, answer_in_one_word=False),
}
