def _fix_sentence_endings(self, chunks):
    """_fix_sentence_endings(chunks : [string])

    Correct for sentence endings buried in 'chunks'.  Eg. when the
    original text contains "... foo.\\nBar ...", munge_whitespace()
    and split() will convert that to [..., "foo.", " ", "Bar", ...]
    which has one too few spaces; this method simply changes the one
    space to two.
    """
    i = 0
    patsearch = self.sentence_end_re.search
    while i < len(chunks)-1:
        if chunks[i+1] == " " and patsearch(chunks[i]):
            chunks[i+1] = "  "
            i += 2
        else:
            i += 1
