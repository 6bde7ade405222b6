"""Prompt templates: seed rules, judges, evolution operators, action spaces,
and labeling prompts."""

INITIAL_RULES = [
    "Please respond concisely.",
    "Provide a brief summary of your response.",
    "Feel free to replace lengthy words or phrases with hashtags and symbols, like emojis.",
    "Please use simple sentence structures.",
    "Please omit unnecessary components such as subjects or predicate verbs.",
    "Try using abbreviations or slang to shorten your sentences.",
    "Identify your main point and communicate it directly without unnecessary details.",
    "Avoid repeating ideas and removing unnecessary filler words.",
    "Get to the point quickly and clearly, without over-explaining.",
    'Remove words like "very" or "really" that don’t add value.',
]

COMMUNICATION_PROMPT = """\
You are {agent_name}. {agent_profile}

{history}

What will you, {agent_name}, speak next?

{rule}"""

ALIGNMENT_PROMPT = """\
Please evaluate whether the agents' responses align with the persona reflected in the reference response.

Please focus on the aspects of content, emotion and atttude, and ignore differences in language structure, e.g., word choice, sentence length, emoji usage and syntax.

Agent's response: {simulated_dialog}

Reference response: {reference_dialog}


Please rate on a scale of 1 to 5, with 1 being most inconsistent and 5 being most like the persona.

Please write a short reason and strictly follow the JSON format for your response:

{{"reason": <str>, "score": <int>}}"""

EXPRESSIVENESS_PROMPT = """\
Please evaluate whether the agents' language is clear and easy to understand.

Agents' language: {simulated_dialog}


Please rate on a scale of 1 to 5, with 1 being most unclear and 5 being most clear.

Please write a short reason and strictly follow the JSON format for your response:

{{"reason": <str>, "score": <int>}}"""

CROSSOVER_PROMPT = """\
Please cross over the following prompts and generate a new prompt bracketed with <prompt> and </prompt>.

Prompt 1: {rule_prompt1}

Prompt 2: {rule_prompt2}"""

MUTATION_PROMPT = """\
Mutate the prompt and generate a new prompt bracketed with <prompt> and </prompt>

Prompt: {rule_prompt}"""

THREAD_ACTION_PROMPT = """\
You're a Twitter user, and I'll present you with some posts. After you see the posts, choose some actions from the following functions.

Suppose you are a real Twitter user. Please simulate real behavior.

- do_nothing: Most of the time, you just don't feel like reposting or liking a post, and you just want to look at it. In such cases, choose this action "do_nothing"

- quote_post: Quote a specified post with given content.
  - Arguments:
    - "post_id" (integer) - The ID of the post to be quoted.
    - "quote_content" (string) - The content of the quote. You can `quote_post` when you want to share a post while adding your own thoughts or context to it.

{rule_prompt}"""

OPINION_ACTION_PROMPT = """\
You're a Twitter user, and I'll present you with some posts. After you see the posts, choose some actions from the following functions.

Suppose you are a real Twitter user. Please simulate real behavior.

- do_nothing: Most of the time, you just don't feel like reposting or liking a post, and you just want to look at it. In such cases, choose this action "do_nothing"

- create_post: Create a new post with the given content.
  - Arguments: "content" (str): The content of the post to be created.

- repost: Repost a post.
  - Arguments: "post_id" (integer) - The ID of the post to be reposted. You can `repost` when you want to spread it.

- quote_post: Quote a specified post with given content.
  - Arguments:
    - "post_id" (integer) - The ID of the post to be quoted.
    - "quote_content" (string) - The content of the quote. You can `quote_post` when you want to share a post while adding your own thoughts or context to it.

{rule_prompt}"""

STANCE_LABEL_PROMPT = """\
Given threads discussing a news, please label the stance of the question tweet on the source news tweet.

Treads: {threads}

Question tweet: {tweet}

Please choose from the following options:

1. support: the author of the response supports the veracity of the news.

2. deny: the author of the response denies the veracity of the news.

3. query: the author of the response asks for additional evidence in relation to the veracity of the news.

4. comment: the author of the response makes their own comment without a clear contribution to assessing the veracity of the news.

Please strictly follow the JSON format for your response:

{{"stance": <str>}}"""

BELIEF_LABEL_PROMPT = """\
Please determine whether the author of the final tweet believes the source news.

Source News:{source_tweet}

Final Tweet:{final_tweet}

If the author does not believe the source news, questions the AUTHENTICITY of the source news or queries for more information about the AUTHENTICITY of the news, please label it as disbelief.

If the author expresses opinions or call for actions under the assumption that the news is true, please label it as belief.

If the author discusses something unrelated to the source news, please label it as unknown. Please label 0 for disbelief, 1 for belief and 2 for unknown.

Please write a short reason and strictly follow the JSON format for your response:

{{"reason": <str>, "label": <int>}}"""

HISIM_STANCE_PROMPT = """\
Please classify the stance of the following response towards the target: {target}.

Response: {tweet}

Please choose from the following options: support, neutral, oppose.

Please strictly follow the JSON format for your response:

{{"stance": <str>}}"""

HISIM_CONTENT_PROMPT = """\
Please classify the type of the following response.

Response: {tweet}

Please choose from the following options:

1. call_for_action: the author urges others to act.

2. sharing_of_opinion: the author expresses a personal view.

3. reference_to_third_party: the author cites or points to an external source or person.

4. testimony: the author recounts a first-hand experience.

5. other: none of the above.

Please strictly follow the JSON format for your response:

{{"label": <str>}}"""

STRUCTURAL_DRIFT_PROMPT = """\
Please evaluate whether the following language is fluent and grammatical natural language.

Language: {simulated_dialog}

Please rate on a scale of 1 to 5, with 1 being most ungrammatical and 5 being most fluent.

Please write a short reason and strictly follow the JSON format for your response:

{{"reason": <str>, "score": <int>}}"""

SEMANTIC_DRIFT_PROMPT = """\
Please evaluate whether the following response preserves the literal meaning of the reference.

Response: {simulated_dialog}

Reference: {reference_dialog}

Please rate on a scale of 1 to 5, with 1 being most divergent in meaning and 5 being fully meaning-preserving.

Please write a short reason and strictly follow the JSON format for your response:

{{"reason": <str>, "score": <int>}}"""
