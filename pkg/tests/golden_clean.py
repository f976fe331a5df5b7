"""Hand-written clean_text cases: (input, expected)."""

GOLDEN = [
    ("plain text", "plain text"),
    ("  leading and trailing  ", "leading and trailing"),
    ("tabs\tand\nnewlines\r\nmixed", "tabs and newlines mixed"),
    ("breaking \U0001F600 news", "breaking news"),
    ("\U0001F525\U0001F525\U0001F525", ""),
    ("see https://t.co/abc123 now", "see now"),
    ("visit www.example.in/path?q=1 today", "visit today"),
    ("HTTP://EXAMPLE.COM/X shouting url", "shouting url"),
    ("zero​width space", "zerowidth space"),
    ("soft­hyphen", "softhyphen"),
    ("bidi ‮override‬ marks", "bidi override marks"),
    ("नमस्ते दुनिया",
     "नमस्ते दुनिया"),
    ("हिंदी  　 ideographic space", "हिंदी ideographic space"),
    ("বাংলা  খবর", "বাংলা খবর"),
    ("family \U0001F468‍\U0001F469‍\U0001F467 emoji", "family emoji"),
    ("flag \U0001F1EE\U0001F1F3 india", "flag india"),
    ("thumbs \U0001F44D\U0001F3FD skin tone", "thumbs skin tone"),
    ("heart ❤️ selector", "heart selector"),
    ("bell\x07 control\x00 chars", "bell control chars"),
    ("தமிழ் https://x.in \U0001F600 செய்தி end",
     "தமிழ் செய்தி end"),
]
