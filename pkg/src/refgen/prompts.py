"""Prompt templates for the LLM-backed modules.

Placeholders use ``str.format`` syntax; everything else is fixed text.
"""

from __future__ import annotations

from typing import Sequence

PROPOSE_INITIAL = (
    "You will be given a target description. Please produce {num_samples} sentence(s) "
    "that only mention one detail from the target description. The produced sentences "
    "should include exclusively content mentioned in the target. Please provide the "
    "sentences in a bullet list format.\n"
    "\n"
    "Target: {target_state}\n"
    "Sentences:"
)

PROPOSE_EXTENSION = (
    "Your task is to produce some sentences. Each sentence should repeat the information "
    'in "{partial_description}", but add one more detail taken from "{full_description}" '
    "Do not make up any new detail.\n"
    "\n"
    "Please produce {num_samples} sentence(s) in a bullet list format. Be very concise!\n"
    "\n"
    "Sentences:"
)

# The single-pass instruction carries no target slot of its own; the target
# is appended in the same layout as PROPOSE_INITIAL.
PROPOSE_SINGLE_PASS = (
    "You will be given a target description. Please produce {num_samples} sentence(s) "
    "based on the target that leave out some part of the description but are still "
    "well-formed. The reduced sentences should include exclusively content already "
    "mentioned in Target. Please provide the sentences in a bullet list format.\n"
    "\n"
    "Target: {target_state}\n"
    "Sentences:"
)

SEMANTIC_EVAL = (
    "Consider the following sentence: {state}\n"
    "\n"
    "Does the following statement provide exclusively information also contained in "
    "the sentence above: {utterance} \n"
    "\n"
    "Explain your answer step by step. \n"
    "\n"
    'Importantly, the last line of your answer should exclusively contain "yes" or "no", '
    "and nothing else. \n"
    "\n"
    "Here the the structure of the answer:\n"
    "\n"
    '"""\n'
    "\n"
    "[step-by-step explanation,\n"
    "\n"
    "possibly over multiple lines]\n"
    "\n"
    "[empty line]\n"
    "\n"
    "[yes/no]\n"
    "\n"
    '"""\n'
    "\n"
    "Your answer: "
)

BASELINE = (
    "You will be given a target state and one or more distractors.\n"
    "Your task is to describe the target state in natural language in a way that "
    "distinguishes it from the distractors.\n"
    "Try to be as concise as possible. You do not need to list all the features of the "
    "target state.\n"
    "Please think step by step, motivating why you decide to mention some features.\n"
    "\n"
    "Here is an example of a good answer.\n"
    "\n"
    "Target state:\n"
    "- The floor is purple, the wall is green, the red small block is in the left corner.\n"
    "\n"
    "Distractors:\n"
    "- The floor is red, the wall is green, the red small block is in the middle.\n"
    "\n"
    "Your answer:\n"
    "One difference between the target and the distractor is the color. This difference "
    "is enough to distinguish between them.\n"
    'Utterance: "The target state has a purple floor".\n'
    "Now the real input.\n"
    "\n"
    "Target state:\n"
    "- {target_state}\n"
    "\n"
    "Distractors:\n"
    "{distractor_list}\n"
    "\n"
    "Your answer:\n"
)

TEMPLATES = {
    "propose_initial": PROPOSE_INITIAL,
    "propose_extension": PROPOSE_EXTENSION,
    "propose_single_pass": PROPOSE_SINGLE_PASS,
    "semantic_eval": SEMANTIC_EVAL,
    "baseline": BASELINE,
}

BULLET_REMINDER = "Please provide the sentences in a bullet list format, one sentence per line."
YES_NO_REMINDER = 'Please answer with a single line containing exclusively "yes" or "no".'


def propose_initial_prompt(target: str, n: int) -> str:
    return PROPOSE_INITIAL.format(num_samples=n, target_state=target)


def propose_extension_prompt(partial: str, target: str, n: int) -> str:
    return PROPOSE_EXTENSION.format(partial_description=partial, full_description=target, num_samples=n)


def propose_single_pass_prompt(target: str, n: int) -> str:
    return PROPOSE_SINGLE_PASS.format(num_samples=n, target_state=target)


def semantic_eval_prompt(state: str, utterance: str) -> str:
    return SEMANTIC_EVAL.format(state=state, utterance=utterance)


def baseline_prompt(target: str, distractors: Sequence[str]) -> str:
    return BASELINE.format(
        target_state=target,
        distractor_list="\n".join(f"- {d}" for d in distractors),
    )
