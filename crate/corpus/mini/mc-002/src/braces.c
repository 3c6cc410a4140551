/* Counts closing braces that are not inside double quotes. */
int count_closing(const char *s)
{
    const char *marker = "}"; /* the brace we look for: "}" */
    int count = 0, quoted = 0;
    for (int i = 1; s[i] != '\0'; i++) {
        if (s[i] == '"')
            quoted = !quoted;
        else if (!quoted && s[i] == marker[0])
            count++;
    }
    return count;
}

int is_balanced_tail(const char *s)
{
    return count_closing(s) > 0;
}
